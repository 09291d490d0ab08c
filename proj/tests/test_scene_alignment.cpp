#include "skinsplat/error.hpp"
#include "skinsplat/scene_alignment.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace skinsplat;
using namespace skinsplat::testing;

namespace {

double angle_between(const Matrix3& a, const Matrix3& b) {
  return Eigen::AngleAxisd(a.transpose() * b).angle();
}

std::vector<Correspondence> project_joints(const PointSet& joints, const Intrinsics& k, const Matrix3& r,
                                           const Vector3& t) {
  std::vector<Correspondence> out;
  for (Eigen::Index i = 0; i < joints.cols(); ++i) out.push_back({joints.col(i), k.project(r * joints.col(i) + t)});
  return out;
}

}  // namespace

TEST_SUITE("scene_alignment") {

TEST_CASE("exact plane survives one outlier") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  PointSet pts(3, 51);
  for (Eigen::Index i = 0; i < 50; ++i) pts.col(i) = Vector3(u(rng), u(rng), 0.0);
  pts.col(50) = Vector3(0, 0, 10);
  PlaneFitOptions opt;
  opt.inlier_threshold = 0.01;
  const GroundPlane p = fit_ground_plane(pts, opt);
  CHECK((p.coefficients() - Eigen::Vector4d(0, 0, 1, 0)).norm() < 1e-6);
}

TEST_CASE("noisy plane normal matches the least-squares fit on true inliers") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::normal_distribution<double> noise(0.0, 0.005);
  const Vector3 n = Vector3(1, 1, 1).normalized();
  PointSet pts(3, 1000);
  for (Eigen::Index i = 0; i < pts.cols(); ++i) {
    const double x = u(rng), y = u(rng);
    pts.col(i) = Vector3(x, y, 1.0 - x - y) + noise(rng) * n;
  }
  PlaneFitOptions opt;
  opt.inlier_threshold = 0.02;
  const GroundPlane p = fit_ground_plane(pts, opt);
  const GroundPlane oracle = fit_plane_least_squares(pts);
  const auto degrees = [](const Vector3& a, const Vector3& b) {
    return std::acos(std::min(1.0, std::abs(a.dot(b)))) * 180.0 / 3.14159265358979323846;
  };
  CHECK(degrees(p.normal, n) < 1.0);
  CHECK(degrees(p.normal, oracle.normal) < 1.0);
}

TEST_CASE("three points define their plane exactly") {
  PointSet pts(3, 3);
  pts << 1, 0, 0,  //
      0, 1, 0,     //
      0, 0, 1;
  const GroundPlane p = fit_ground_plane(pts);
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(std::abs(p.signed_distance(pts.col(i))) < 1e-12);
  CHECK(std::abs(std::abs(p.normal.dot(Vector3(1, 1, 1).normalized())) - 1.0) < 1e-12);
}

TEST_CASE("too few or collinear points are rejected") {
  CHECK_THROWS_AS(fit_ground_plane(PointSet::Zero(3, 2)), Error);
  PointSet line(3, 5);
  for (Eigen::Index i = 0; i < 5; ++i) line.col(i) = Vector3(static_cast<double>(i), 0, 0);
  CHECK_THROWS_AS(fit_ground_plane(line), Error);
}

TEST_CASE("scale examples") {
  const Eigen::Vector4d ground(0, 0, 1, 0);
  PointSet j(3, 1);
  j.col(0) = Vector3(0, 0, 1);
  CHECK(solve_scale(Vector3(0, 0, 2), j, ground).scale == doctest::Approx(2.0).epsilon(1e-15));
  j.col(0) = Vector3(0, 0, 0);
  CHECK(solve_scale(Vector3(0, 0, 1), j, ground).scale == doctest::Approx(1.0).epsilon(1e-15));

  // Camera at height 3 looking down: joints at heights 1, 1.5 and 2 give
  // s = 3/2, 2 and 3.
  PointSet three(3, 3);
  three << 0.1, 0.2, -0.3,  //
      0, 0.5, 0.2,          //
      1, 1.5, 2;
  const ScaleSolution s = solve_scale(Vector3(0, 0, 3), three, ground);
  CHECK(s.scale == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(s.joint == 0);
  CHECK(s.discarded == 0);
}

TEST_CASE("scale solve discards parallel and backward rays") {
  const Eigen::Vector4d ground(0, 0, 1, 0);
  PointSet j(3, 3);
  j << 1, 0, 0,  //
      0, 0, 0,   //
      2, 3, 1.5;
  // Joint 0 is level with the camera, joint 1 is above it.
  const ScaleSolution s = solve_scale(Vector3(0, 0, 2), j, ground);
  CHECK(s.discarded == 2);
  CHECK(s.scale == doctest::Approx(4.0));
  PointSet none(3, 1);
  none.col(0) = Vector3(0, 0, 3);
  CHECK_THROWS_AS(solve_scale(Vector3(0, 0, 2), none, ground), Error);
}

TEST_CASE("scale is invariant to rescaling the plane coefficients") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector3 n = Vector3(u(rng), u(rng), 1.5 + u(rng)).normalized();
    const Eigen::Vector4d plane(n.x(), n.y(), n.z(), 0.2 * u(rng));
    const Vector3 c = 3.0 * n + Vector3(u(rng), u(rng), u(rng)) * 0.3;
    PointSet j(3, 4);
    for (Eigen::Index i = 0; i < 4; ++i) j.col(i) = c - (0.5 + 0.5 * std::abs(u(rng))) * n + 0.2 * Vector3(u(rng), u(rng), u(rng));
    const double k = std::pow(10.0, 3.0 * u(rng));
    const double a = solve_scale(c, j, plane).scale, b = solve_scale(c, j, Eigen::Vector4d(k * plane)).scale;
    CHECK(std::abs(a - b) <= 1e-9 * std::abs(a));
  }
}

TEST_CASE("PnP recovers a noiseless pose") {
  const Intrinsics k{500, 500, 320, 240};
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  PointSet joints(3, 10);
  for (Eigen::Index i = 0; i < 10; ++i) joints.col(i) = Vector3(u(rng), 2 * u(rng), u(rng));
  const Matrix3 r = random_rotation(rng, 0.6);
  const Vector3 t(0.2, -0.1, 3.0);
  const auto corr = project_joints(joints, k, r, t);
  const PnPResult p = solve_pnp(corr, k);
  CHECK(angle_between(p.rotation, r) < 1e-4);
  CHECK((p.translation - t).norm() < 1e-4);
  CHECK(p.rms_error < 1e-6);
}

TEST_CASE("PnP started at the answer stops after one iteration") {
  const Intrinsics k{400, 400, 200, 200};
  PointSet joints(3, 5);
  joints << 0, 0.3, -0.3, 0.1, 0,  //
      0, 0.5, 0.5, -0.8, 0.2,      //
      0, 0.1, -0.1, 0.05, 0.3;
  const RigidTransform guess = default_pnp_guess();
  const auto corr = project_joints(joints, k, guess.linear(), guess.translation());
  const PnPResult p = solve_pnp(corr, k, guess);
  CHECK(p.iterations <= 1);
  CHECK(p.rms_error == doctest::Approx(0.0));
  CHECK(p.rotation.isApprox(Matrix3::Identity()));
}

TEST_CASE("PnP needs four correspondences") {
  const std::vector<Correspondence> three(3, Correspondence{Vector3::Zero(), Vector2::Zero()});
  CHECK_THROWS_AS(solve_pnp(three, Intrinsics{}), Error);
}

TEST_CASE("composed alignment maps joints onto the scaled camera rays") {
  std::mt19937_64 rng(5);
  const Camera cam = look_at(Vector3(1, -4, 2), Vector3(0, 0, 0.8), Vector3(0, 0, 1), {300, 300, 160, 120}, 320, 240);
  const Matrix3 rp = random_rotation(rng, 1.0);
  const Vector3 tp(0.1, 0.2, 2.5);
  const double s = 1.7;
  const SceneAlignment a = compose_alignment(rp, tp, cam, s);
  const Vector3 c = cam.center();
  for (int i = 0; i < 5; ++i) {
    const Vector3 j = Vector3::Random();
    const Vector3 unit = cam.rotation.transpose() * (rp * j + tp - cam.translation);
    PointSet one(3, 1);
    one.col(0) = j;
    CHECK((apply_alignment(a, one).col(0) - (c + s * (unit - c))).norm() < 1e-12);
  }
}

TEST_CASE("full alignment puts the lowest joint on the ground") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  PointSet cloud(3, 400);
  for (Eigen::Index i = 0; i < cloud.cols(); ++i) cloud.col(i) = Vector3(u(rng), u(rng), 0.0);
  const Camera cam = look_at(Vector3(0, -4, 1.5), Vector3(0, 0, 0.9), Vector3(0, 0, 1), {400, 400, 160, 120}, 320, 240);
  // Body standing upright with feet on the ground 4 units from the camera; the
  // PnP solution only sees it up to scale.
  PointSet body(3, 6);
  body << 0, 0.2, -0.2, 0.1, -0.1, 0,  //
      0, 0, 0, 0.8, 0.8, 1.6,          //
      0, 0.1, -0.1, 0, 0, 0.05;
  const Matrix3 body_to_world = Eigen::AngleAxisd(1.5707963267948966, Vector3::UnitX()).toRotationMatrix();
  std::vector<Correspondence> corr;
  for (Eigen::Index i = 0; i < body.cols(); ++i) {
    const Vector3 w = body_to_world * body.col(i);
    corr.push_back({body.col(i) / 2.0, cam.intrinsics.project(cam.to_camera(w))});
  }
  const AlignmentReport r = align_body_to_scene(cloud, corr, cam);
  CHECK(r.pnp.rms_error < 1e-6);
  CHECK(r.scale.scale == doctest::Approx(2.0).epsilon(1e-6));
  PointSet half = body / 2.0;
  const PointSet world = apply_alignment(r.alignment, half);
  for (Eigen::Index i = 0; i < body.cols(); ++i) CHECK((world.col(i) - body_to_world * body.col(i)).norm() < 1e-5);
}

TEST_CASE("alignment JSON round trip and validation") {
  SceneAlignment a;
  a.rotation = Eigen::AngleAxisd(0.4, Vector3(1, 2, 3).normalized()).toRotationMatrix();
  a.translation = Vector3(1, -2, 0.5);
  a.scale = 1.25;
  const SceneAlignment b = alignment_from_json(alignment_to_json(a));
  CHECK(b.rotation.isApprox(a.rotation, 1e-15));
  CHECK(b.translation == a.translation);
  CHECK(b.scale == a.scale);
  a.scale = -1.0;
  CHECK_THROWS_AS(a.validate(), Error);
}

}  // TEST_SUITE
