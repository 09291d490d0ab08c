// Acceptance run: one PASS/FAIL line per criterion, tolerances fixed below.
// Exit status is non-zero when a criterion fails, unless that criterion is a
// recorded known gap (its line still reads FAIL).

#include "skinsplat/body_model.hpp"
#include "skinsplat/error.hpp"
#include "skinsplat/fit.hpp"
#include "skinsplat/parallel.hpp"
#include "skinsplat/position_texture.hpp"
#include "skinsplat/scene_alignment.hpp"
#include "skinsplat/splat_renderer.hpp"
#include "skinsplat/synthetic.hpp"
#include "skinsplat/toy_body.hpp"
#include "support.hpp"

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>

using namespace skinsplat;
using namespace skinsplat::testing;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Tolerances and budgets.
constexpr double kLbsTol = 1e-6;
constexpr double kLbsSeconds = 10.0;
constexpr int kLbsPoses = 1000;
constexpr int kTextureResolution = 512;
constexpr double kTextureTol = 1e-6;
constexpr double kScaleExactTol = 1e-9;
constexpr double kScaleResidualTol = 1e-9;
constexpr int kScaleTrials = 10000;
constexpr int kPnpPoses = 100;
constexpr double kPnpRotationTol = 1e-4;     // radians
constexpr double kPnpTranslationTol = 1e-4;  // meters
constexpr double kPnpNoisyRmsPx = 2.0;
constexpr double kSingleSplatRelTol = 0.01;  // inclusive; the 0.99 alpha clamp sits exactly on it
constexpr double kRoundoff = 1e-12;
constexpr int kTransmittanceScenes = 100;
constexpr double kPermutationTol = 1e-6;
constexpr double kRigidTol = 1e-5;
constexpr int kGradientSeeds = 20;
constexpr double kGradientStep = 1e-4;
constexpr double kGradientRelTol = 1e-3;
constexpr double kFitPsnrDb = 30.0;
constexpr double kFitLossRatio = 0.10;
constexpr double kFitSeconds = 30.0 * 60.0;
constexpr double kDecouplingTol = 1e-6;
constexpr std::size_t kBenchPoints = 50000;
constexpr int kBenchSize = 256;
constexpr int kBenchFrames = 20;
constexpr double kBenchFps = 5.0;

struct Outcome {
  bool pass = false;
  std::string detail;
  json metrics = json::object();
};

struct Criterion {
  std::string name;
  std::function<Outcome()> run;
  bool known_gap = false;
};

// ---------------------------------------------------------------------------
// LBS

Pose random_pose(std::mt19937_64& rng, std::size_t joints) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Pose p = Pose::zero(joints);
  for (auto& r : p.joint_rotations) r = Vector3(u(rng), u(rng), u(rng));
  p.root_translation = Vector3(u(rng), u(rng), u(rng));
  return p;
}

RigidTransform random_rigid(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  RigidTransform g = RigidTransform::Identity();
  g.linear() = random_rotation(rng);
  g.translation() = Vector3(u(rng), u(rng), u(rng));
  return g;
}

Outcome lbs_suite() {
  const auto t0 = Clock::now();
  const SkinnedMesh m = make_toy_body();
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> angle(10.0, 45.0), shift(-3.0, 3.0);
  double unity = 0.0, round_trip = 0.0, equivariance = 0.0;
  for (int trial = 0; trial < kLbsPoses; ++trial) {
    const Pose pose = random_pose(rng, m.joint_count());
    const JointTransforms t = forward_kinematics(m, pose);
    const PointSet posed = lbs(m.vertices, m.weights, t);

    const Vector3 d(shift(rng), shift(rng), shift(rng));
    JointTransforms shifted = t;
    for (auto& x : shifted) x.pretranslate(d);
    unity = std::max(unity, ((lbs(m.vertices, m.weights, shifted) - posed).colwise() - d).cwiseAbs().maxCoeff());

    const DaPoseConfig cfg = DaPoseConfig::symmetric_hips("left_hip", "right_hip", angle(rng) * M_PI / 180.0);
    const PointSet da = lbs(m.vertices, m.weights, da_pose_transforms(m, cfg));
    round_trip = std::max(round_trip, (lbs(da, m.weights, canonical_to_world(m, da_pose(m, cfg), cfg)) - da).cwiseAbs().maxCoeff());
    round_trip = std::max(round_trip, (lbs(m.vertices, m.weights, pose_from_canonical(m, da_pose(m, cfg), cfg)) - da).cwiseAbs().maxCoeff());

    const RigidTransform g = random_rigid(rng);
    JointTransforms moved = t;
    for (auto& x : moved) x = g * x;
    const PointSet expect = (g.linear() * posed).colwise() + g.translation();
    equivariance = std::max(equivariance, (lbs(m.vertices, m.weights, moved) - expect).cwiseAbs().maxCoeff());
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = unity <= kLbsTol && round_trip <= kLbsTol && equivariance <= kLbsTol && secs < kLbsSeconds;
  o.detail = fmt::format("{} poses: unity {:.2e}, round trip {:.2e}, equivariance {:.2e} (tol {:.0e}); {:.2f} s (< {} s)",
                         kLbsPoses, unity, round_trip, equivariance, kLbsTol, secs, kLbsSeconds);
  o.metrics = {{"unity", unity}, {"round_trip", round_trip}, {"equivariance", equivariance}, {"seconds", secs}};
  return o;
}

// ---------------------------------------------------------------------------
// Position texture

Outcome texture_suite() {
  const SkinnedMesh m = make_toy_body();
  const PositionTexture t = bake(m, kTextureResolution);
  double position_err = 0.0, uv_err = 0.0, weight_err = 0.0;
  std::size_t checked = 0, bad = 0;
  for (int v = 0; v < t.height; ++v) {
    for (int u = 0; u < t.width; ++u) {
      const Texel& x = t.at(u, v);
      if (!x.valid) continue;
      ++checked;
      const Triangle& tri = m.triangles[x.triangle];
      Vector3 p = Vector3::Zero();
      Vector2 uv = Vector2::Zero();
      for (int k = 0; k < 3; ++k) {
        p += x.bary(k) * m.vertices.col(tri.vertices[static_cast<std::size_t>(k)]);
        uv += x.bary(k) * tri.uvs[static_cast<std::size_t>(k)];
      }
      const double pe = (p - x.position).cwiseAbs().maxCoeff();
      const double ue = std::max(std::abs(uv.x() * t.width - (u + 0.5)), std::abs(uv.y() * t.height - (v + 0.5)));
      double sum = 0.0;
      for (const auto& jw : x.weights) sum += jw.weight;
      const double we = std::abs(sum - 1.0);
      position_err = std::max(position_err, pe);
      uv_err = std::max(uv_err, ue);
      weight_err = std::max(weight_err, we);
      if (pe > kTextureTol || ue > kTextureTol || we > kTextureTol) ++bad;
    }
  }
  const std::size_t n128 = bake(m, 128).valid_count(), n256 = bake(m, 256).valid_count();
  const bool increasing = n128 < n256 && n256 < t.valid_count();
  const bool deterministic = serialize_texture(t) == serialize_texture(bake(m, kTextureResolution));
  Outcome o;
  o.pass = checked > 0 && bad == 0 && increasing && deterministic;
  o.detail = fmt::format(
      "{}/{} texels within {:.0e} (position {:.1e}, uv {:.1e} texel, weight sum {:.1e}); counts {} < {} < {}: {}; "
      "bytes identical: {}",
      checked - bad, checked, kTextureTol, position_err, uv_err, weight_err, n128, n256, t.valid_count(),
      increasing ? "yes" : "no", deterministic ? "yes" : "no");
  o.metrics = {{"valid_texels", {{"128", n128}, {"256", n256}, {"512", t.valid_count()}}},
               {"position_error", position_err},
               {"uv_error_texels", uv_err},
               {"weight_sum_error", weight_err},
               {"deterministic", deterministic}};
  return o;
}

// ---------------------------------------------------------------------------
// Scale solve

Outcome scale_suite() {
  // Camera at the origin, ground z = -1.
  const Vector3 c = Vector3::Zero();
  const Eigen::Vector4d plane(0, 0, 1, 1);
  const auto single = [&](const Vector3& j) {
    PointSet js(3, 1);
    js.col(0) = j;
    return solve_scale(c, js, plane).scale;
  };
  const double s2 = single({0.3, 0.2, -0.5});
  const double s1 = single({1.0, -2.0, -1.0});
  PointSet several(3, 3);
  several << 0, 0, 0.2,  //
      0, 0.1, 0,         //
      -0.5, -0.25, -2.0 / 3.0;
  const ScaleSolution smin = solve_scale(c, several, plane);
  const double analytic =
      std::max({std::abs(s2 - 2.0), std::abs(s1 - 1.0), std::abs(smin.scale - 1.5)});
  const bool picked = smin.joint == 2;

  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  double residual = 0.0;
  int trials = 0;
  while (trials < kScaleTrials) {
    const Vector3 a = Vector3(g(rng), g(rng), g(rng)).normalized();
    const double d = 3.0 * u(rng);
    const Vector3 cam(4 * u(rng), 4 * u(rng), 4 * u(rng));
    PointSet js(3, 4);
    for (Eigen::Index k = 0; k < 4; ++k) js.col(k) = cam + Vector3(u(rng), u(rng), u(rng));
    ScaleSolution s;
    try {
      s = solve_scale(cam, js, Eigen::Vector4d(a.x(), a.y(), a.z(), d));
    } catch (const Error&) {
      continue;  // no joint ray reaches the plane in front of the camera
    }
    const Vector3 hit = cam + s.scale * (js.col(static_cast<Eigen::Index>(s.joint)) - cam);
    residual = std::max(residual, std::abs(a.dot(hit) + d));
    ++trials;
  }
  Outcome o;
  o.pass = analytic <= kScaleExactTol && picked && residual < kScaleResidualTol;
  o.detail = fmt::format("analytic cases off by {:.1e} (tol {:.0e}), minimum at joint {}; {} random configurations, "
                         "max ray-plane residual {:.1e} (< {:.0e})",
                         analytic, kScaleExactTol, smin.joint, trials, residual, kScaleResidualTol);
  o.metrics = {{"analytic_error", analytic}, {"residual", residual}, {"trials", trials}};
  return o;
}

// ---------------------------------------------------------------------------
// PnP

double rotation_angle(const Matrix3& a, const Matrix3& b) {
  const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

Outcome pnp_suite() {
  const SkinnedMesh m = make_toy_body();
  PointSet joints(3, static_cast<Eigen::Index>(m.joint_count()));
  for (std::size_t j = 0; j < m.joint_count(); ++j) joints.col(static_cast<Eigen::Index>(j)) = m.joints[j].rest_position;
  const Intrinsics k{500, 500, 320, 240};
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-0.3, 0.3), depth(2.0, 5.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  double worst_angle = 0.0, worst_translation = 0.0, worst_rms = 0.0;
  for (int trial = 0; trial < kPnpPoses; ++trial) {
    const Matrix3 r = random_rotation(rng, 0.8);
    const Vector3 t(u(rng), u(rng), depth(rng));
    std::vector<Correspondence> clean, noisy;
    for (Eigen::Index i = 0; i < joints.cols(); ++i) {
      const Vector3 pc = r * joints.col(i) + t;
      const Vector2 px = k.project(pc);
      clean.push_back({joints.col(i), px});
      noisy.push_back({joints.col(i), px + Vector2(noise(rng), noise(rng))});
    }
    const PnPResult a = solve_pnp(clean, k);
    worst_angle = std::max(worst_angle, rotation_angle(a.rotation, r));
    worst_translation = std::max(worst_translation, (a.translation - t).norm());
    worst_rms = std::max(worst_rms, solve_pnp(noisy, k).rms_error);
  }
  Outcome o;
  o.pass = worst_angle < kPnpRotationTol && worst_translation < kPnpTranslationTol && worst_rms <= kPnpNoisyRmsPx;
  o.detail = fmt::format("{} poses: rotation {:.1e} rad, translation {:.1e} m (tol {:.0e}); 1 px noise worst RMS {:.3f} px "
                         "(<= {} px)",
                         kPnpPoses, worst_angle, worst_translation, kPnpRotationTol, worst_rms, kPnpNoisyRmsPx);
  o.metrics = {{"rotation", worst_angle}, {"translation", worst_translation}, {"noisy_rms_px", worst_rms}};
  return o;
}

// ---------------------------------------------------------------------------
// Renderer

RenderableScene reversed(const RenderableScene& s, std::mt19937_64& rng) {
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  RenderableScene r;
  for (const std::size_t k : order) {
    const auto i = static_cast<Eigen::Index>(k);
    r.push_back(s.positions.col(i), s.covariances[k], s.opacities(i), s.colors.col(i), s.origins[k]);
  }
  return r;
}

Outcome renderer_suite() {
  const Camera cam = pinhole(32, 32, 32.0);
  std::mt19937_64 rng(9);

  // Nearly opaque small splat centered on a pixel: that pixel shows its color.
  double single = 0.0;
  std::uniform_int_distribution<int> px(2, 29);
  std::uniform_real_distribution<double> uc(0.1, 0.9);
  for (int trial = 0; trial < 20; ++trial) {
    const int x = px(rng), y = px(rng);
    const double z = 3.0;
    const Vector3 p((x + 0.5 - cam.intrinsics.cx) * z / cam.intrinsics.fx, (y + 0.5 - cam.intrinsics.cy) * z / cam.intrinsics.fy, z);
    const Vector3 color(uc(rng), uc(rng), uc(rng));
    RenderableScene s;
    s.push_back(p, 0.01 * Matrix3::Identity(), 0.999999, color, Origin::Background);
    const Vector3 got = render(s, cam).pixel(x, y);
    single = std::max(single, ((got - color).array() / color.array()).abs().maxCoeff());
  }

  RenderSettings checked;
  checked.check_transmittance = true;
  double max_weight = 0.0;
  bool bound_held = true;
  for (int k = 0; k < kTransmittanceScenes; ++k) {
    RenderStats stats;
    try {
      render(background_scene(random_gaussians(1000 + static_cast<std::uint64_t>(k), 80)), cam, checked, &stats);
    } catch (const Error&) {
      bound_held = false;
    }
    max_weight = std::max(max_weight, stats.max_weight_sum);
  }
  bound_held = bound_held && max_weight <= 1.0;

  double permutation = 0.0, rigid = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const RenderableScene s = background_scene(random_gaussians(2000 + seed, 40));
    const Image base = render(s, cam);
    permutation = std::max(permutation, max_abs_diff(base, render(reversed(s, rng), cam)));

    const Matrix3 r = random_rotation(rng);
    const Vector3 t(uc(rng) * 4 - 2, uc(rng) * 4 - 2, uc(rng) * 4 - 2);
    RenderableScene moved = s;
    for (std::size_t k = 0; k < s.size(); ++k) {
      const auto i = static_cast<Eigen::Index>(k);
      moved.positions.col(i) = r * s.positions.col(i) + t;
      moved.covariances[k] = r * s.covariances[k] * r.transpose();
    }
    Camera moved_cam = cam;
    moved_cam.rotation = cam.rotation * r.transpose();
    moved_cam.translation = cam.translation - moved_cam.rotation * t;
    rigid = std::max(rigid, max_abs_diff(base, render(moved, moved_cam)));
  }
  Outcome o;
  o.pass = single <= kSingleSplatRelTol + kRoundoff && bound_held && permutation <= kPermutationTol && rigid <= kRigidTol;
  o.detail = fmt::format("single splat {:.2e} (<= {}); transmittance over {} scenes max weight sum {:.6f} (<= 1): {}; "
                         "permutation {:.1e} (<= {:.0e}); rigid {:.1e} (<= {:.0e})",
                         single, kSingleSplatRelTol, kTransmittanceScenes, max_weight, bound_held ? "held" : "violated",
                         permutation, kPermutationTol, rigid, kRigidTol);
  o.metrics = {{"single_splat", single}, {"max_weight_sum", max_weight}, {"permutation", permutation}, {"rigid", rigid}};
  return o;
}

// ---------------------------------------------------------------------------
// Gradients

Outcome gradient_suite() {
  const Camera cam = pinhole(32, 32, 32.0);
  const double h = kGradientStep;
  double worst = 0.0;
  for (int k = 0; k < kGradientSeeds; ++k) {
    const auto seed = 500 + static_cast<std::uint64_t>(k);
    const BackgroundGaussians bg = random_gaussians(seed, 5);
    const Image w = random_weights(seed, 32, 32);
    const RenderableScene s = background_scene(bg);
    const auto objective = [&](const RenderableScene& x) { return weighted_sum(render(x, cam), w); };
    const GradientBuffers g = render_backward(s, cam, w, {}, false);
    for (Eigen::Index i = 0; i < 5; ++i) {
      for (int c = 0; c < 3; ++c) {
        RenderableScene p = s, m = s;
        p.colors(c, i) += h;
        m.colors(c, i) -= h;
        worst = std::max(worst, relative_error(g.d_color(c, i), (objective(p) - objective(m)) / (2 * h)));
      }
      RenderableScene p = s, m = s;
      p.opacities(i) = sigmoid(bg.opacity_logits(i) + h);
      m.opacities(i) = sigmoid(bg.opacity_logits(i) - h);
      worst = std::max(worst, relative_error(g.d_opacity_logit(i), (objective(p) - objective(m)) / (2 * h)));
    }
  }
  Outcome o;
  o.pass = worst < kGradientRelTol;
  o.detail = fmt::format("{} seeds, 5 Gaussians at 32x32, h = {:.0e}: max relative error {:.2e} (< {:.0e})", kGradientSeeds,
                         h, worst, kGradientRelTol);
  o.metrics = {{"max_relative_error", worst}};
  return o;
}

// ---------------------------------------------------------------------------
// End-to-end fit

Outcome fit_suite() {
  SyntheticFit fx = make_synthetic_fit();
  const FitConfig cfg;
  FitProblem problem = fx.initial;
  const auto held_psnr = [&](const FitProblem& p) {
    return psnr(render(compose_scene(p, fx.held_out.pose), fx.held_out.camera, cfg.render), fx.held_out.image);
  };
  const double psnr0 = held_psnr(problem);
  const double loss0 = evaluate(problem, fx.frames, cfg).total;
  const auto t0 = Clock::now();
  optimize(problem, fx.frames, cfg);
  const double secs = seconds_since(t0);
  const double loss1 = evaluate(problem, fx.frames, cfg).total;
  const double psnr1 = held_psnr(problem);
  const double ratio = loss1 / loss0;
  Outcome o;
  o.pass = psnr1 >= kFitPsnrDb && ratio < kFitLossRatio && secs < kFitSeconds;
  o.detail = fmt::format("{} texels + {} background, {} views at {}px, {} iterations: held-out PSNR {:.2f} dB (from {:.2f}; "
                         ">= {}), final/initial loss {:.4f}/{:.4f} = {:.1f}% (< {:.0f}%), {:.0f} s (< {:.0f} s) on {} thread(s)",
                         fx.initial.human.size(), fx.initial.background.size(), fx.frames.size(), fx.held_out.camera.width,
                         cfg.iterations, psnr1, psnr0, kFitPsnrDb, loss1, loss0, 100 * ratio, 100 * kFitLossRatio, secs,
                         kFitSeconds, worker_count());
  o.metrics = {{"psnr_initial", psnr0}, {"psnr_final", psnr1}, {"loss_initial", loss0},
               {"loss_final", loss1},  {"loss_ratio", ratio},  {"seconds", secs}};
  return o;
}

// ---------------------------------------------------------------------------
// Decoupling

Outcome decoupling_suite() {
  SyntheticFitOptions opt;
  opt.cameras = 4;
  const SyntheticFit fx = make_synthetic_fit(opt);
  const FitProblem& p = fx.truth;
  double outside = 0.0, inside = 0.0;
  std::size_t pairs = 0;
  for (const Frame& f : fx.frames) {
    for (double phase : {0.7, 1.9}) {
      const Pose a = f.pose, b = synthetic_pose(p.mesh, phase);
      const RenderableScene sa = compose_scene(p, a), sb = compose_scene(p, b);
      const Image ia = render(sa, f.camera), ib = render(sb, f.camera);
      const Mask ma = human_coverage(sa, f.camera), mb = human_coverage(sb, f.camera);
      for (int y = 0; y < ia.height; ++y) {
        for (int x = 0; x < ia.width; ++x) {
          const double d = (ia.pixel(x, y) - ib.pixel(x, y)).cwiseAbs().maxCoeff();
          if (ma.at(x, y) || mb.at(x, y))
            inside = std::max(inside, d);
          else
            outside = std::max(outside, d);
        }
      }
      ++pairs;
    }
  }
  Outcome o;
  // The inside check guards against a vacuous pass where the poses render alike.
  o.pass = outside <= kDecouplingTol && inside > 1e-3;
  o.detail = fmt::format("{} pose pairs: max difference outside coverage union {:.1e} (<= {:.0e}), inside {:.3f}", pairs,
                         outside, kDecouplingTol, inside);
  o.metrics = {{"outside", outside}, {"inside", inside}, {"pairs", pairs}};
  return o;
}

// ---------------------------------------------------------------------------
// Throughput

Outcome bench_suite(const std::filesystem::path& artifact) {
  const RenderableScene scene = bench_scene(kBenchPoints, 0, kBenchSize, kBenchSize);
  const Camera cam = bench_camera(kBenchSize, kBenchSize);
  render(scene, cam);
  std::vector<double> ms;
  for (int k = 0; k < kBenchFrames; ++k) {
    const auto t0 = Clock::now();
    render(scene, cam);
    ms.push_back(seconds_since(t0) * 1e3);
  }
  const double mean = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
  const double fps = 1e3 / mean;
  const json report = {{"version", 1},          {"points", kBenchPoints}, {"width", kBenchSize},
                       {"height", kBenchSize},  {"frames", kBenchFrames}, {"threads", worker_count()},
                       {"ms_mean", mean},       {"ms_min", *std::min_element(ms.begin(), ms.end())},
                       {"ms_max", *std::max_element(ms.begin(), ms.end())}, {"fps", fps}};
  std::ofstream(artifact) << report.dump(2) << "\n";
  Outcome o;
  o.pass = fps >= kBenchFps;
  o.detail = fmt::format("{} Gaussians at {}x{}: {:.2f} FPS (>= {}) over {} frames on {} thread(s); report {}", kBenchPoints,
                         kBenchSize, kBenchSize, fps, kBenchFps, kBenchFrames, worker_count(), artifact.string());
  o.metrics = report;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::err);
  const std::filesystem::path out_dir = argc > 1 ? argv[1] : ".";
  std::filesystem::create_directories(out_dir);

  const std::vector<Criterion> criteria = {
      {"lbs", lbs_suite},
      {"position_texture", texture_suite},
      {"scale_solve", scale_suite},
      {"pnp", pnp_suite},
      {"renderer", renderer_suite},
      {"gradient_oracle", gradient_suite},
      {"end_to_end_fit", fit_suite, true},
      {"decoupling", decoupling_suite},
      {"bench", [&] { return bench_suite(out_dir / "bench.json"); }},
  };

  json results = json::array();
  int failed = 0, gaps = 0;
  for (const Criterion& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("error: ") + e.what();
    }
    const char* note = !o.pass && c.known_gap ? " [known gap]" : "";
    std::cout << fmt::format("{} {}: {}{}", o.pass ? "PASS" : "FAIL", c.name, o.detail, note) << std::endl;
    if (!o.pass) (c.known_gap ? gaps : failed)++;
    results.push_back({{"criterion", c.name}, {"pass", o.pass}, {"known_gap", c.known_gap}, {"metrics", o.metrics}});
  }
  std::ofstream(out_dir / "acceptance.json") << results.dump(2) << "\n";
  std::cout << fmt::format("{} criteria: {} passed, {} failed, {} failing known gap(s)", criteria.size(),
                           criteria.size() - static_cast<std::size_t>(failed + gaps), failed, gaps)
            << std::endl;
  return failed == 0 ? 0 : 1;
}
