#include "skinsplat/error.hpp"
#include "skinsplat/fit.hpp"
#include "skinsplat/synthetic.hpp"
#include "skinsplat/toy_body.hpp"
#include "support.hpp"

#include <doctest.h>

#include <limits>

using namespace skinsplat;
using namespace skinsplat::testing;

namespace {

// Five background Gaussians in front of a 32x32 camera, no human.
FitProblem five_gaussians(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  FitProblem p;
  p.mesh = make_toy_body({8, 4});
  p.background.resize(5);
  for (Eigen::Index i = 0; i < 5; ++i) {
    p.background.positions.col(i) = Vector3(0.5 * u(rng), 0.5 * u(rng), 3.0 + 0.3 * i);
    p.background.rotations.col(i) = Eigen::Vector4d(1, 0.2 * u(rng), 0.2 * u(rng), 0.2 * u(rng));
    p.background.log_scales.col(i).setConstant(std::log(0.35));
    p.background.opacity_logits(i) = 1.5;
    p.background.color_logits.col(i) = 2.0 * Vector3(u(rng), u(rng), u(rng));
  }
  return p;
}

Frame frame_of(const FitProblem& p) {
  const Camera cam = pinhole(32, 32, 40.0);
  return capture_frame(p, cam, Pose::zero(p.mesh.joint_count()));
}

FitConfig colors_only(int iterations) {
  FitConfig c;
  c.iterations = iterations;
  c.learning_rates = LearningRates{0, 0, 0, 0, 5e-2, 0, 0, 0, 0, 0};
  return c;
}

}  // namespace

TEST_SUITE("fit") {

TEST_CASE("zero iterations leave the scene unchanged") {
  const FitProblem truth = five_gaussians(1);
  FitProblem p = truth;
  p.background.color_logits.setZero();
  const FitProblem before = p;
  const FitResult r = optimize(p, {frame_of(truth)}, colors_only(0));
  CHECK(r.history.empty());
  CHECK(p.background.color_logits == before.background.color_logits);
  CHECK(p.background.positions == before.background.positions);
}

TEST_CASE("optimizing colors alone recovers a five-Gaussian scene") {
  const FitProblem truth = five_gaussians(2);
  FitProblem p = truth;
  p.background.color_logits.setZero();
  const std::vector<Frame> frames{frame_of(truth)};
  const FitConfig cfg = colors_only(200);
  const double before = evaluate(p, frames, cfg).l1;
  optimize(p, frames, cfg);
  const double after = evaluate(p, frames, cfg).l1;
  CHECK(before > 0.0);
  CHECK(after <= 0.1 * before);
  CHECK(p.background.positions == truth.background.positions);
}

TEST_CASE("same seed gives identical runs") {
  const FitProblem truth = five_gaussians(3);
  FitProblem a = truth, b = truth;
  a.background.color_logits.setZero();
  a.background.opacity_logits.setConstant(0.0);
  b = a;
  const Frame f0 = frame_of(truth);
  FitProblem shifted = truth;
  shifted.background.positions.row(0).array() += 0.1;
  const std::vector<Frame> frames{f0, frame_of(shifted)};
  FitConfig cfg;
  cfg.iterations = 12;
  cfg.seed = 9;
  const FitResult ra = optimize(a, frames, cfg), rb = optimize(b, frames, cfg);
  CHECK(ra.frame_order == rb.frame_order);
  CHECK(a.background.positions == b.background.positions);
  CHECK(a.background.color_logits == b.background.color_logits);
  REQUIRE(ra.history.size() == 12);
  CHECK(ra.history.back().total == rb.history.back().total);
  // Every frame is visited once per epoch.
  CHECK(ra.frame_order[0] + ra.frame_order[1] == 1);
}

TEST_CASE("non-finite gradients abort with the parameter group") {
  const SkinnedMesh mesh = make_toy_body();
  FitProblem p = five_gaussians(4);
  p.mesh = mesh;
  p.human = init_human(bake(mesh, 16));
  p.alignment.translation = Vector3(0, 0.9, 4.0);
  const Frame f = frame_of(p);
  p.human.color_logits(1, 3) = std::numeric_limits<double>::quiet_NaN();
  FitConfig cfg;
  cfg.iterations = 3;
  try {
    optimize(p, {f}, cfg);
    FAIL("expected a numerical failure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NumericalFailure);
    const std::string msg = e.what();
    // The poisoned color reaches the image, so the first group checked reports.
    CHECK(msg.find("group 'background.position' at iteration 0") != std::string::npos);
    CHECK(msg.find("first at") != std::string::npos);
  }
}

TEST_CASE("invalid configurations are rejected") {
  FitConfig c;
  c.iterations = -1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = FitConfig{};
  c.learning_rates.bg_color = -1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = FitConfig{};
  c.weights.l1 = -0.5;
  CHECK_THROWS_AS(c.validate(), Error);
  const FitProblem p = five_gaussians(5);
  FitProblem q = p;
  CHECK_THROWS_AS(optimize(q, {}, FitConfig{}), Error);
}

TEST_CASE("default config carries the reconstruction weights and round-trips") {
  const FitConfig def = fit_config_from_json(nlohmann::json::object());
  CHECK(def.weights.l1 == 0.7);
  CHECK(def.weights.ssim == 0.3);
  CHECK(def.weights.lpips == 0.0);
  CHECK(def.weights.geo == 1.0);
  CHECK(def.weights.offset == 1.0);
  CHECK(def.weights.scale == 1.0);
  const nlohmann::json echoed = fit_config_to_json(def);
  CHECK(echoed.at("lambda").at("l1") == 0.7);
  CHECK(echoed.at("lambda").at("ssim") == 0.3);

  FitConfig c;
  c.iterations = 77;
  c.seed = 12;
  c.learning_rates.human_scale = 0.25;
  c.render.background = Vector3(0.1, 0.2, 0.3);
  const FitConfig back = fit_config_from_json(fit_config_to_json(c));
  CHECK(back.iterations == 77);
  CHECK(back.seed == 12);
  CHECK(back.learning_rates.human_scale == 0.25);
  CHECK(back.render.background == c.render.background);
  CHECK(fit_config_to_json(back) == fit_config_to_json(c));
  CHECK_THROWS_AS(fit_config_from_json({{"version", 2}}), Error);
}

TEST_CASE("checkpoints fire on schedule") {
  const FitProblem truth = five_gaussians(6);
  FitProblem p = truth;
  FitConfig cfg = colors_only(10);
  cfg.checkpoint_every = 4;
  std::vector<int> seen;
  optimize(p, {frame_of(truth)}, cfg, [&](int it, const FitProblem&) { seen.push_back(it); });
  CHECK(seen == std::vector<int>{4, 8});
}

}  // TEST_SUITE
