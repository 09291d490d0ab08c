#include "skinsplat/synthetic.hpp"

#include "skinsplat/error.hpp"
#include "skinsplat/toy_body.hpp"

#include <cmath>
#include <random>

namespace skinsplat {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

std::vector<Camera> ring_cameras(int count, double radius, double height, const Vector3& target, int size,
                                 double focal, double phase) {
  require(count >= 1 && radius > 0.0 && size >= 1 && focal > 0.0, ErrorCode::InvalidInput, "invalid camera ring");
  std::vector<Camera> cams;
  for (int k = 0; k < count; ++k) {
    const double a = phase + 2.0 * kPi * k / count;
    const Vector3 eye(radius * std::sin(a), height, radius * std::cos(a));
    cams.push_back(look_at(eye, target, Vector3::UnitY(), {focal, focal, size / 2.0, size / 2.0}, size, size));
  }
  return cams;
}

BackgroundGaussians synthetic_background(std::size_t count, std::uint64_t seed, double radius, double wall_height) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  BackgroundGaussians bg;
  bg.resize(count);
  const double disc_area = kPi * radius * radius;
  const double wall_area = 2.0 * kPi * radius * wall_height;
  const double spacing = std::sqrt((disc_area + wall_area) / static_cast<double>(std::max<std::size_t>(count, 1)));
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(count); ++i) {
    const double a = 2.0 * kPi * u(rng);
    Eigen::Quaterniond q;
    if (u(rng) * (disc_area + wall_area) < disc_area) {
      const double r = radius * std::sqrt(u(rng));
      bg.positions.col(i) = Vector3(r * std::sin(a), 0.0, r * std::cos(a));
      q = Eigen::AngleAxisd(a, Vector3::UnitY()) * Eigen::AngleAxisd(kPi / 2, Vector3::UnitX());
    } else {
      bg.positions.col(i) = Vector3(radius * std::sin(a), wall_height * u(rng), radius * std::cos(a));
      q = Eigen::AngleAxisd(a, Vector3::UnitY());
    }
    // Flat discs: thin along the local z axis (the surface normal).
    bg.rotations.col(i) = Eigen::Vector4d(q.w(), q.x(), q.y(), q.z());
    bg.log_scales.col(i) = Vector3(std::log(0.6 * spacing), std::log(0.6 * spacing), std::log(0.05 * spacing));
    bg.opacity_logits(i) = logit(0.6 + 0.35 * u(rng));
    bg.color_logits.col(i) = Vector3(logit(0.1 + 0.8 * u(rng)), logit(0.1 + 0.8 * u(rng)), logit(0.1 + 0.8 * u(rng)));
  }
  return bg;
}

Pose synthetic_pose(const SkinnedMesh& mesh, double phase) {
  Pose p = Pose::zero(mesh.joint_count());
  const auto set = [&](const char* name, const Vector3& aa) {
    const int j = mesh.find_joint(name);
    require(j >= 0, ErrorCode::InvalidInput, std::string("mesh lacks joint ") + name);
    p.joint_rotations[static_cast<std::size_t>(j)] = aa;
  };
  set("left_shoulder", Vector3(0, 0, -1.1 + 0.1 * std::sin(phase)));
  set("right_shoulder", Vector3(0, 0, 1.1 - 0.1 * std::sin(phase)));
  set("left_elbow", Vector3(0, -0.4, 0));
  set("right_elbow", Vector3(0, 0.4, 0));
  set("left_hip", Vector3(0.15 * std::sin(phase), 0, 0));
  set("right_hip", Vector3(-0.15 * std::sin(phase), 0, 0));
  return p;
}

Frame capture_frame(const FitProblem& problem, const Camera& camera, const Pose& pose, const RenderSettings& settings,
                    double mask_threshold) {
  const PosedHuman posed = pose_human(problem.human, problem.mesh, pose, problem.alignment, problem.da_pose);
  Frame f;
  f.camera = camera;
  f.pose = pose;
  f.image = render(merge(background_scene(problem.background), posed.scene), camera, settings);
  RenderSettings human = settings;
  human.background = Vector3::Zero();
  const Image alpha = render(posed.scene, camera, human);
  f.mask = Mask(camera.width, camera.height);
  for (std::size_t i = 0; i < alpha.pixel_count(); ++i)
    f.mask.values[i] = alpha.alpha(static_cast<Eigen::Index>(i)) > mask_threshold ? 1 : 0;
  return f;
}

SyntheticFit make_synthetic_fit(const SyntheticFitOptions& o) {
  SyntheticFit out;
  const SkinnedMesh mesh = make_toy_body();
  out.texture = bake(mesh, o.texture_resolution);

  FitProblem& truth = out.truth;
  truth.mesh = mesh;
  truth.background = synthetic_background(o.background_count, o.seed);
  truth.human = init_human(out.texture);
  // Smooth appearance pattern over the body plus per-part opacity variation.
  std::mt19937_64 rng(o.seed + 1);
  std::uniform_real_distribution<double> u(0.0, 2.0 * kPi);
  const double p0 = u(rng), p1 = u(rng), p2 = u(rng);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(truth.human.size()); ++i) {
    const Vector3 x = truth.human.rest_positions.col(i);
    const Vector3 c(0.5 + 0.35 * std::sin(4.0 * x.y() + p0), 0.5 + 0.35 * std::sin(5.0 * x.x() + 3.0 * x.z() + p1),
                    0.5 + 0.35 * std::cos(3.0 * x.y() - 4.0 * x.x() + p2));
    truth.human.color_logits.col(i) = c.unaryExpr([](double v) { return logit(v); });
    truth.human.opacity_logits(i) = logit(0.85 + 0.1 * std::sin(6.0 * x.y()));
  }

  FitProblem& init = out.initial;
  init = truth;
  init.human = init_human(out.texture);
  init.background.color_logits.setZero();
  init.background.opacity_logits.setConstant(logit(0.7));

  const Vector3 target(0.0, 0.9, 0.0);
  const Pose pose = synthetic_pose(mesh);
  for (const Camera& cam : ring_cameras(o.cameras, o.camera_radius, 1.2, target, o.image_size, o.focal))
    out.frames.push_back(capture_frame(truth, cam, pose));
  const Camera held = ring_cameras(1, o.camera_radius, 1.2, target, o.image_size, o.focal, kPi / o.cameras)[0];
  out.held_out = capture_frame(truth, held, pose);
  return out;
}

Camera bench_camera(int width, int height) {
  Camera cam;
  cam.intrinsics = {static_cast<double>(width), static_cast<double>(width), width / 2.0, height / 2.0};
  cam.width = width;
  cam.height = height;
  return cam;
}

RenderableScene bench_scene(std::size_t count, std::uint64_t seed, int width, int height) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Camera cam = bench_camera(width, height);
  RenderableScene s;
  const auto n = static_cast<Eigen::Index>(count);
  s.positions.resize(3, n);
  s.colors.resize(3, n);
  s.opacities.resize(n);
  s.covariances.resize(count);
  s.origins.assign(count, Origin::Background);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = 3.0 + 3.0 * u(rng);
    const double x = (u(rng) * width - cam.intrinsics.cx) * z / cam.intrinsics.fx;
    const double y = (u(rng) * height - cam.intrinsics.cy) * z / cam.intrinsics.fy;
    s.positions.col(i) = Vector3(x, y, z);
    const double sigma = 0.005 + 0.01 * u(rng);
    s.covariances[static_cast<std::size_t>(i)] = sigma * sigma * Matrix3::Identity();
    s.opacities(i) = 0.3 + 0.6 * u(rng);
    s.colors.col(i) = Vector3(u(rng), u(rng), u(rng));
  }
  return s;
}

}  // namespace skinsplat
