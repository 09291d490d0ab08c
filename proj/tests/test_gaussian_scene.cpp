#include "skinsplat/error.hpp"
#include "skinsplat/gaussian_scene.hpp"
#include "skinsplat/ply.hpp"
#include "skinsplat/toy_body.hpp"
#include "support.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <filesystem>

using namespace skinsplat;
using namespace skinsplat::testing;

namespace {

constexpr double kPi = 3.14159265358979323846;

BackgroundGaussians random_background(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  BackgroundGaussians bg;
  bg.resize(n);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
    bg.positions.col(i) = Vector3(u(rng), u(rng), 3 + u(rng));
    bg.rotations.col(i) = Eigen::Vector4d(u(rng), u(rng), u(rng), u(rng)) * 2.0;
    bg.log_scales.col(i) = Vector3(u(rng), u(rng), u(rng)) - Vector3::Constant(2.0);
    bg.opacity_logits(i) = u(rng);
    bg.color_logits.col(i) = Vector3(u(rng), u(rng), u(rng)) * 2.0;
  }
  return bg;
}

// Linear functional of a renderable scene with fixed random coefficients,
// standing in for the renderer's upstream gradients.
struct Probe {
  PointSet d_position, d_color;
  std::vector<Matrix3> d_covariance;
  Eigen::VectorXd d_opacity_logit;

  Probe(std::uint64_t seed, std::size_t n) {
    const auto c = static_cast<Eigen::Index>(n);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    d_position.resize(3, c);
    d_color.resize(3, c);
    d_opacity_logit.resize(c);
    for (Eigen::Index i = 0; i < c; ++i) {
      d_position.col(i) = Vector3(u(rng), u(rng), u(rng));
      d_color.col(i) = Vector3(u(rng), u(rng), u(rng));
      d_opacity_logit(i) = u(rng);
      Matrix3 m;
      for (int k = 0; k < 9; ++k) m(k) = u(rng);
      d_covariance.push_back(0.5 * (m + m.transpose()));
    }
  }

  double value(const RenderableScene& s) const {
    double v = 0.0;
    for (Eigen::Index i = 0; i < s.positions.cols(); ++i) {
      v += d_position.col(i).dot(s.positions.col(i)) + d_color.col(i).dot(s.colors.col(i));
      v += d_covariance[static_cast<std::size_t>(i)].cwiseProduct(s.covariances[static_cast<std::size_t>(i)]).sum();
      v += d_opacity_logit(i) * logit(s.opacities(i));
    }
    return v;
  }

  SceneGradientView view() const { return {&d_position, &d_covariance, &d_color, &d_opacity_logit, 0}; }
};

template <typename Fn>
double central(Fn&& f, double& x, double h) {
  const double x0 = x;
  x = x0 + h;
  const double p = f();
  x = x0 - h;
  const double m = f();
  x = x0;
  return (p - m) / (2 * h);
}

SkinnedMesh chain() {
  SkinnedMesh m;
  m.joints = {{"root", -1, Vector3::Zero()}, {"child", 0, Vector3(0, 1, 0)}};
  m.vertices.resize(3, 3);
  m.vertices << 0, 1, 0, 0, 0, 1, 0, 0, 0;
  Triangle t;
  t.vertices = {0, 1, 2};
  t.uvs = {Vector2(0, 0), Vector2(1, 0), Vector2(0, 1)};
  m.triangles = {t};
  m.weights = {{{0, 1.0}}, {{0, 1.0}}, {{1, 1.0}}};
  return make_skinned_mesh(m);
}

HumanGaussians single_texel(const Vector3& rest, const Vector3& offset, const SkinWeights& w) {
  HumanGaussians h;
  h.texture_width = h.texture_height = 1;
  h.texel_index = {0};
  h.rest_positions = rest;
  h.offsets = offset;
  h.color_logits.setZero(3, 1);
  h.log_scales.setZero(1);
  h.opacity_logits.setZero(1);
  h.lbs_weights = {w};
  return h;
}

}  // namespace

TEST_SUITE("gaussian_scene") {

TEST_CASE("covariance examples") {
  CHECK(build_covariance(Eigen::Quaterniond::Identity(), Vector3::Zero()).isApprox(Matrix3::Identity(), 1e-15));
  const Eigen::Quaterniond qz(Eigen::AngleAxisd(kPi / 2, Vector3::UnitZ()));
  const Matrix3 v = build_covariance(qz, Vector3(std::log(2.0), 0, 0));
  CHECK((v - Vector3(1, 4, 1).asDiagonal().toDenseMatrix()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("covariance eigenvalues are the squared scales") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-2.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Quaterniond q(random_rotation(rng, kPi));
    const Vector3 s(u(rng), u(rng), u(rng));
    Vector3 eig = Eigen::SelfAdjointEigenSolver<Matrix3>(build_covariance(q, s)).eigenvalues();
    Vector3 expected = (2.0 * s).array().exp().matrix();
    std::sort(eig.data(), eig.data() + 3);
    std::sort(expected.data(), expected.data() + 3);
    CHECK((eig - expected).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("canonical pose with zero offsets reproduces the Da-posed texture points") {
  const SkinnedMesh m = make_toy_body();
  const PositionTexture tex = bake(m, 32);
  const HumanGaussians h = init_human(tex);
  const DaPoseConfig cfg = DaPoseConfig::symmetric_hips();
  const PosedHuman p = pose_human(h, m, da_pose(m, cfg), SceneAlignment{}, cfg);
  const PointSet oracle = lbs(h.rest_positions, h.lbs_weights, da_pose_transforms(m, cfg));
  CHECK((p.scene.positions - oracle).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(p.scene.size() == h.size());
  for (Origin o : p.scene.origins) CHECK(o == Origin::Human);
}

TEST_CASE("root translation shifts every Gaussian by the aligned translation") {
  const SkinnedMesh m = make_toy_body();
  const HumanGaussians h = init_human(bake(m, 32));
  SceneAlignment a;
  a.rotation = Eigen::AngleAxisd(0.7, Vector3(0.2, 1, 0.1).normalized()).toRotationMatrix();
  a.translation = Vector3(1, 2, 3);
  a.scale = 1.3;
  Pose pose = Pose::zero(m.joint_count());
  const PosedHuman base = pose_human(h, m, pose, a);
  const Vector3 t(0.2, -0.4, 0.9);
  pose.root_translation = t;
  const PosedHuman moved = pose_human(h, m, pose, a);
  const Vector3 shift = a.scale * a.rotation * t;
  CHECK(((moved.scene.positions - base.scene.positions).colwise() - shift).cwiseAbs().maxCoeff() < 1e-12);
  for (std::size_t i = 0; i < h.size(); ++i) CHECK(moved.scene.covariances[i] == base.scene.covariances[i]);
}

TEST_CASE("single texel on a quarter-turned joint follows the hand-composed chain") {
  const SkinnedMesh m = chain();
  const Vector3 rest(0.5, 1.5, 0.2), offset(0.1, 0.0, -0.1);
  const HumanGaussians h = single_texel(rest, offset, {{1, 1.0}});
  Pose pose = Pose::zero(2);
  pose.joint_rotations[1] = Vector3(0, 0, kPi / 2);
  SceneAlignment a;
  a.translation = Vector3(0, 0, 5);
  a.scale = 2.0;
  const PosedHuman p = pose_human(h, m, pose, a, DaPoseConfig{});
  Eigen::Matrix4d about_child = Eigen::Matrix4d::Identity();
  about_child.block<3, 3>(0, 0) = Eigen::AngleAxisd(kPi / 2, Vector3::UnitZ()).toRotationMatrix();
  about_child.block<3, 1>(0, 3) = Vector3(0, 1, 0) - about_child.block<3, 3>(0, 0) * Vector3(0, 1, 0);
  Eigen::Matrix4d align = Eigen::Matrix4d::Identity();
  align.block<3, 3>(0, 0) = 2.0 * Matrix3::Identity();
  align.block<3, 1>(0, 3) = Vector3(0, 0, 5);
  const Eigen::Vector4d expected = align * about_child * (rest + offset).homogeneous();
  CHECK((p.scene.positions.col(0) - expected.head<3>()).norm() < 1e-12);
  CHECK(p.scene.covariances[0].isApprox(std::pow(2.0 * h.base_scale, 2) * Matrix3::Identity(), 1e-14));
}

TEST_CASE("background pullback matches finite differences") {
  BackgroundGaussians bg = random_background(2, 6);
  const Probe probe(3, bg.size());
  const BackgroundGradients g = background_backward(bg, probe.view());
  const auto f = [&] { return probe.value(background_scene(bg)); };
  const double h = 1e-5;
  double worst = 0.0;
  const auto check = [&](double analytic, double& param) {
    worst = std::max(worst, relative_error(analytic, central(f, param, h), 1e-6));
  };
  for (Eigen::Index i = 0; i < 6; ++i) {
    for (int k = 0; k < 3; ++k) {
      check(g.positions(k, i), bg.positions(k, i));
      check(g.log_scales(k, i), bg.log_scales(k, i));
      check(g.color_logits(k, i), bg.color_logits(k, i));
    }
    for (int k = 0; k < 4; ++k) check(g.rotations(k, i), bg.rotations(k, i));
    check(g.opacity_logits(i), bg.opacity_logits(i));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("human pullback matches finite differences, including skinning weights") {
  const SkinnedMesh m = make_toy_body();
  HumanGaussians hum = init_human(bake(m, 16));
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(hum.size()); ++i) {
    hum.offsets.col(i) = 0.02 * Vector3(u(rng), u(rng), u(rng));
    hum.color_logits.col(i) = Vector3(u(rng), u(rng), u(rng));
    hum.log_scales(i) = 0.3 * u(rng);
    hum.opacity_logits(i) = u(rng);
  }
  Pose pose = Pose::zero(m.joint_count());
  for (auto& r : pose.joint_rotations) r = 0.3 * Vector3(u(rng), u(rng), u(rng));
  SceneAlignment a;
  a.rotation = random_rotation(rng, 1.0);
  a.scale = 1.4;
  const Probe probe(5, hum.size());
  const PosedHuman posed = pose_human(hum, m, pose, a);
  const HumanGradients g = human_backward(hum, posed, probe.view());
  const auto f = [&] { return probe.value(pose_human(hum, m, pose, a).scene); };
  const double h = 1e-5;
  double worst = 0.0;
  const auto check = [&](double analytic, double& param) {
    worst = std::max(worst, relative_error(analytic, central(f, param, h), 1e-6));
  };
  std::size_t multi = 0;
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(hum.size()); i += 7) {
    const auto k = static_cast<std::size_t>(i);
    for (int c = 0; c < 3; ++c) {
      check(g.offsets(c, i), hum.offsets(c, i));
      check(g.color_logits(c, i), hum.color_logits(c, i));
    }
    check(g.log_scales(i), hum.log_scales(i));
    check(g.opacity_logits(i), hum.opacity_logits(i));
    if (hum.lbs_weights[k].size() > 1) ++multi;
    for (std::size_t j = 0; j < hum.lbs_weights[k].size(); ++j) check(g.lbs_weights[k][j].weight, hum.lbs_weights[k][j].weight);
  }
  CHECK(multi > 0);
  CHECK(worst < 1e-5);
}

TEST_CASE("simplex projection") {
  SkinWeights a{{0, 0.5}, {3, 0.5}};
  project_to_simplex(a);
  CHECK(a == SkinWeights{{0, 0.5}, {3, 0.5}});
  SkinWeights b{{0, 1.0}, {1, 1.0}};
  project_to_simplex(b);
  CHECK(b[0].weight == doctest::Approx(0.5));
  CHECK(b[1].weight == doctest::Approx(0.5));
  SkinWeights c{{0, -1.0}, {1, 0.3}, {2, 0.2}};
  project_to_simplex(c);
  CHECK(c[0].weight == 0.0);
  CHECK(c[1].weight == doctest::Approx(0.55));
  CHECK(c[2].weight == doctest::Approx(0.45));
  SkinWeights empty;
  CHECK_THROWS_AS(project_to_simplex(empty), Error);
}

TEST_CASE("merge keeps background first") {
  const RenderableScene bg = background_scene(random_background(6, 3));
  const SkinnedMesh m = make_toy_body();
  const PosedHuman hum = pose_human(init_human(bake(m, 16)), m, Pose::zero(m.joint_count()), SceneAlignment{});
  const RenderableScene s = merge(bg, hum.scene);
  REQUIRE(s.size() == 3 + hum.scene.size());
  CHECK(s.origins[2] == Origin::Background);
  CHECK(s.origins[3] == Origin::Human);
  CHECK(s.positions.col(3) == hum.scene.positions.col(0));
  CHECK(s.covariances[1] == bg.covariances[1]);
}

TEST_CASE("background PLY round trip") {
  const BackgroundGaussians bg = random_background(7, 20);
  const auto path = std::filesystem::temp_directory_path() / "skinsplat_bg_test.ply";
  save_background_ply(bg, path);
  const BackgroundGaussians back = load_background_ply(path);
  std::filesystem::remove(path);
  REQUIRE(back.size() == 20);
  // Columns are float32 on disk.
  CHECK((back.positions - bg.positions).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((back.log_scales - bg.log_scales).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((back.color_logits - bg.color_logits).cwiseAbs().maxCoeff() < 1e-4);
  CHECK((back.opacity_logits - bg.opacity_logits).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("human attributes round trip bit-exactly and reject a foreign texture") {
  const SkinnedMesh m = make_toy_body();
  const PositionTexture tex = bake(m, 24);
  HumanGaussians h = init_human(tex);
  h.offsets.setRandom();
  h.log_scales.setRandom();
  const auto bytes = serialize_human(h);
  const HumanGaussians back = deserialize_human(bytes, tex);
  CHECK(back.offsets == h.offsets);
  CHECK(back.log_scales == h.log_scales);
  CHECK(back.base_scale == h.base_scale);
  CHECK(back.lbs_weights == h.lbs_weights);
  CHECK(serialize_human(back) == bytes);
  CHECK_THROWS_AS(deserialize_human(bytes, bake(m, 32)), Error);
}

TEST_CASE("combined export writes every Gaussian") {
  const BackgroundGaussians bg = random_background(8, 5);
  const SkinnedMesh m = make_toy_body();
  const HumanGaussians h = init_human(bake(m, 16));
  const PosedHuman posed = pose_human(h, m, Pose::zero(m.joint_count()), SceneAlignment{});
  const auto path = std::filesystem::temp_directory_path() / "skinsplat_combined_test.ply";
  export_combined_ply(bg, posed, h, path);
  const PlyVertexTable t = read_ply_vertices(path);
  std::filesystem::remove(path);
  CHECK(t.count == 5 + h.size());
  for (const char* name : {"x", "f_dc_0", "opacity", "scale_2", "rot_3"}) CHECK(t.has(name));
  CHECK(t.column("x")[5] == doctest::Approx(posed.scene.positions(0, 0)).epsilon(1e-6));
}

}  // TEST_SUITE
