#include "skinsplat/fit.hpp"

#include "skinsplat/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace skinsplat {

void FitConfig::validate() const {
  weights.validate();
  require(iterations >= 0, ErrorCode::InvalidInput, "iterations must be non-negative");
  require(checkpoint_every >= 0, ErrorCode::InvalidInput, "checkpoint interval must be non-negative");
  const LearningRates& r = learning_rates;
  for (double v : {r.bg_position, r.bg_rotation, r.bg_scale, r.bg_opacity, r.bg_color, r.human_offset, r.human_color,
                   r.human_scale, r.human_opacity, r.lbs_weights})
    require(v >= 0.0 && std::isfinite(v), ErrorCode::InvalidInput, "learning rates must be finite and non-negative");
}

nlohmann::json fit_config_to_json(const FitConfig& c) {
  const LearningRates& r = c.learning_rates;
  return {
      {"version", 1},
      {"iterations", c.iterations},
      {"seed", c.seed},
      {"checkpoint_every", c.checkpoint_every},
      {"mask_threshold", c.mask_threshold},
      {"background_color", {c.render.background.x(), c.render.background.y(), c.render.background.z()}},
      {"lambda",
       {{"l1", c.weights.l1},
        {"ssim", c.weights.ssim},
        {"lpips", c.weights.lpips},
        {"geo", c.weights.geo},
        {"offset", c.weights.offset},
        {"scale", c.weights.scale}}},
      {"learning_rates",
       {{"background",
         {{"position", r.bg_position},
          {"rotation", r.bg_rotation},
          {"scale", r.bg_scale},
          {"opacity", r.bg_opacity},
          {"color", r.bg_color}}},
        {"human",
         {{"offset", r.human_offset},
          {"color", r.human_color},
          {"scale", r.human_scale},
          {"opacity", r.human_opacity},
          {"lbs_weights", r.lbs_weights}}}}},
  };
}

FitConfig fit_config_from_json(const nlohmann::json& doc) {
  FitConfig c;
  try {
    if (doc.contains("version"))
      require(doc.at("version").get<int>() == 1, ErrorCode::InvalidInput, "unsupported fit config version");
    const auto read = [](const nlohmann::json& j, const char* key, auto& value) {
      if (j.contains(key)) value = j.at(key).get<std::decay_t<decltype(value)>>();
    };
    read(doc, "iterations", c.iterations);
    read(doc, "seed", c.seed);
    read(doc, "checkpoint_every", c.checkpoint_every);
    read(doc, "mask_threshold", c.mask_threshold);
    if (doc.contains("background_color")) {
      const auto v = doc.at("background_color").get<std::vector<double>>();
      require(v.size() == 3, ErrorCode::InvalidInput, "background_color needs 3 components");
      c.render.background = Vector3(v[0], v[1], v[2]);
    }
    if (doc.contains("lambda")) {
      const auto& l = doc.at("lambda");
      read(l, "l1", c.weights.l1);
      read(l, "ssim", c.weights.ssim);
      read(l, "lpips", c.weights.lpips);
      read(l, "geo", c.weights.geo);
      read(l, "offset", c.weights.offset);
      read(l, "scale", c.weights.scale);
    }
    if (doc.contains("learning_rates")) {
      const auto& lr = doc.at("learning_rates");
      LearningRates& r = c.learning_rates;
      if (lr.contains("background")) {
        const auto& b = lr.at("background");
        read(b, "position", r.bg_position);
        read(b, "rotation", r.bg_rotation);
        read(b, "scale", r.bg_scale);
        read(b, "opacity", r.bg_opacity);
        read(b, "color", r.bg_color);
      }
      if (lr.contains("human")) {
        const auto& h = lr.at("human");
        read(h, "offset", r.human_offset);
        read(h, "color", r.human_color);
        read(h, "scale", r.human_scale);
        read(h, "opacity", r.human_opacity);
        read(h, "lbs_weights", r.lbs_weights);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidInput, std::string("malformed fit config: ") + e.what());
  }
  c.validate();
  return c;
}

void Frame::validate() const {
  camera.validate();
  require(image.width == camera.width && image.height == camera.height, ErrorCode::InvalidInput,
          "frame image does not match its camera resolution");
  require(mask.width == image.width && mask.height == image.height, ErrorCode::InvalidInput,
          "frame mask does not match its image");
  require(image.rgb.allFinite(), ErrorCode::InvalidInput, "frame image has non-finite pixels");
}

RenderableScene compose_scene(const FitProblem& problem, const Pose& pose) {
  return merge(background_scene(problem.background),
               pose_human(problem.human, problem.mesh, pose, problem.alignment, problem.da_pose).scene);
}

namespace {

RenderSettings human_settings(const FitConfig& config) {
  RenderSettings s = config.render;
  s.background = Vector3::Zero();
  return s;
}

}  // namespace

LossBreakdown evaluate_frame(const FitProblem& problem, const Frame& frame, const FitConfig& config) {
  const PosedHuman posed = pose_human(problem.human, problem.mesh, frame.pose, problem.alignment, problem.da_pose);
  const Image rendered = render(merge(background_scene(problem.background), posed.scene), frame.camera, config.render);
  const Image human = render(posed.scene, frame.camera, human_settings(config));
  return compute_loss(rendered, human, frame.image, frame.mask, problem.human, config.weights);
}

LossBreakdown evaluate(const FitProblem& problem, const std::vector<Frame>& frames, const FitConfig& config) {
  LossBreakdown sum;
  for (const Frame& f : frames) {
    const LossBreakdown l = evaluate_frame(problem, f, config);
    sum.l1 += l.l1, sum.ssim += l.ssim, sum.l1_human += l.l1_human, sum.ssim_human += l.ssim_human;
    sum.geo += l.geo, sum.offset += l.offset, sum.scale += l.scale, sum.total += l.total;
  }
  const double n = std::max<double>(1.0, static_cast<double>(frames.size()));
  for (double* v : {&sum.l1, &sum.ssim, &sum.l1_human, &sum.ssim_human, &sum.geo, &sum.offset, &sum.scale, &sum.total})
    *v /= n;
  return sum;
}

namespace {

class Adam {
 public:
  Adam(const char* name, double lr) : name_(name), lr_(lr) {}

  void step(double* param, const double* grad, Eigen::Index n, int t, int iteration) {
    Eigen::Map<const Eigen::ArrayXd> g(grad, n);
    if (!g.allFinite()) {
      Eigen::Index first = 0;
      while (first < n && std::isfinite(g(first))) ++first;
      const auto bad = (!g.isFinite()).count();
      throw Error(ErrorCode::NumericalFailure,
                  fmt::format("non-finite gradient in group '{}' at iteration {}: {} of {} entries, first at {}",
                              name_, iteration, bad, n, first));
    }
    if (lr_ == 0.0 || n == 0) return;
    if (m_.size() != n) {
      m_.setZero(n);
      v_.setZero(n);
    }
    m_ = kBeta1 * m_ + (1 - kBeta1) * g;
    v_ = kBeta2 * v_ + (1 - kBeta2) * g.square();
    const double c1 = 1.0 - std::pow(kBeta1, t);
    const double c2 = 1.0 - std::pow(kBeta2, t);
    Eigen::Map<Eigen::ArrayXd> p(param, n);
    p -= lr_ * (m_ / c1) / ((v_ / c2).sqrt() + kEpsilon);
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;
  const char* name_;
  double lr_;
  Eigen::ArrayXd m_, v_;
};

std::vector<double> flatten(const std::vector<SkinWeights>& rows) {
  std::vector<double> out;
  for (const auto& row : rows)
    for (const auto& jw : row) out.push_back(jw.weight);
  return out;
}

void unflatten(const std::vector<double>& flat, std::vector<SkinWeights>& rows) {
  std::size_t k = 0;
  for (auto& row : rows)
    for (auto& jw : row) jw.weight = flat[k++];
}

SceneGradientView view_of(const GradientBuffers& g, Eigen::Index offset) {
  return {&g.d_position, &g.d_covariance, &g.d_color, &g.d_opacity_logit, offset};
}

}  // namespace

FitResult optimize(FitProblem& problem, const std::vector<Frame>& frames, const FitConfig& config,
                   const CheckpointFn& checkpoint) {
  config.validate();
  problem.background.validate();
  problem.human.validate();
  require(!frames.empty(), ErrorCode::InvalidInput, "fitting needs at least one frame");
  for (const Frame& f : frames) {
    f.validate();
    require(f.pose.joint_rotations.size() == problem.mesh.joint_count(), ErrorCode::InvalidInput,
            "frame pose joint count does not match the mesh");
  }

  const LearningRates& lr = config.learning_rates;
  Adam bg_pos("background.position", lr.bg_position), bg_rot("background.rotation", lr.bg_rotation),
      bg_scale("background.scale", lr.bg_scale), bg_op("background.opacity", lr.bg_opacity),
      bg_col("background.color", lr.bg_color), h_off("human.offset", lr.human_offset),
      h_col("human.color", lr.human_color), h_scale("human.scale", lr.human_scale),
      h_op("human.opacity", lr.human_opacity), h_w("human.lbs_weights", lr.lbs_weights);

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> epoch(frames.size());
  std::iota(epoch.begin(), epoch.end(), 0);
  std::size_t cursor = epoch.size();

  FitResult result;
  result.history.reserve(static_cast<std::size_t>(config.iterations));
  const RenderSettings hs = human_settings(config);
  BackgroundGaussians& bg = problem.background;
  HumanGaussians& human = problem.human;
  const auto nb = static_cast<Eigen::Index>(bg.size());

  for (int it = 0; it < config.iterations; ++it) {
    if (cursor == epoch.size()) {
      std::shuffle(epoch.begin(), epoch.end(), rng);
      cursor = 0;
    }
    const std::size_t fi = epoch[cursor++];
    const Frame& frame = frames[fi];
    result.frame_order.push_back(fi);

    const PosedHuman posed = pose_human(human, problem.mesh, frame.pose, problem.alignment, problem.da_pose);
    const RenderableScene scene = merge(background_scene(bg), posed.scene);
    const Image rendered = render(scene, frame.camera, config.render);
    const Image human_img = render(posed.scene, frame.camera, hs);
    LossGradients lg;
    result.history.push_back(compute_loss(rendered, human_img, frame.image, frame.mask, human, config.weights, &lg));

    const GradientBuffers gf = render_backward(scene, frame.camera, lg.d_rendered, config.render);
    const GradientBuffers gh = render_backward(posed.scene, frame.camera, lg.d_human, hs);
    const BackgroundGradients bgg = background_backward(bg, view_of(gf, 0));
    HumanGradients hg = human_backward(human, posed, view_of(gf, nb));
    const HumanGradients hg2 = human_backward(human, posed, view_of(gh, 0));
    hg.offsets += hg2.offsets + lg.d_offsets;
    hg.color_logits += hg2.color_logits + lg.d_color_logits;
    hg.log_scales += hg2.log_scales + lg.d_log_scales;
    hg.opacity_logits += hg2.opacity_logits + lg.d_opacity_logits;
    for (std::size_t k = 0; k < hg.lbs_weights.size(); ++k)
      for (std::size_t j = 0; j < hg.lbs_weights[k].size(); ++j) hg.lbs_weights[k][j].weight += hg2.lbs_weights[k][j].weight;

    const int t = it + 1;
    bg_pos.step(bg.positions.data(), bgg.positions.data(), bg.positions.size(), t, it);
    bg_rot.step(bg.rotations.data(), bgg.rotations.data(), bg.rotations.size(), t, it);
    bg_scale.step(bg.log_scales.data(), bgg.log_scales.data(), bg.log_scales.size(), t, it);
    bg_op.step(bg.opacity_logits.data(), bgg.opacity_logits.data(), bg.opacity_logits.size(), t, it);
    bg_col.step(bg.color_logits.data(), bgg.color_logits.data(), bg.color_logits.size(), t, it);
    h_off.step(human.offsets.data(), hg.offsets.data(), human.offsets.size(), t, it);
    h_col.step(human.color_logits.data(), hg.color_logits.data(), human.color_logits.size(), t, it);
    h_scale.step(human.log_scales.data(), hg.log_scales.data(), human.log_scales.size(), t, it);
    h_op.step(human.opacity_logits.data(), hg.opacity_logits.data(), human.opacity_logits.size(), t, it);
    std::vector<double> weights = flatten(human.lbs_weights);
    const std::vector<double> d_weights = flatten(hg.lbs_weights);
    h_w.step(weights.data(), d_weights.data(), static_cast<Eigen::Index>(weights.size()), t, it);
    unflatten(weights, human.lbs_weights);
    for (auto& row : human.lbs_weights) project_to_simplex(row);

    if (config.checkpoint_every > 0 && checkpoint && (it + 1) % config.checkpoint_every == 0) checkpoint(it + 1, problem);
    if ((it + 1) % 100 == 0 || it == 0)
      spdlog::debug("fit iteration {}: total {:.6f} (l1 {:.5f}, ssim {:.5f})", it + 1, result.history.back().total,
                    result.history.back().l1, result.history.back().ssim);
  }
  return result;
}

}  // namespace skinsplat
