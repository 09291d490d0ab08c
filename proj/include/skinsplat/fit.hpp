#pragma once

#include "skinsplat/body_model.hpp"
#include "skinsplat/camera.hpp"
#include "skinsplat/gaussian_scene.hpp"
#include "skinsplat/loss.hpp"
#include "skinsplat/splat_renderer.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <vector>

namespace skinsplat {

struct LearningRates {
  double bg_position = 1e-4;
  double bg_rotation = 1e-3;
  double bg_scale = 5e-3;
  double bg_opacity = 5e-2;
  double bg_color = 5e-2;
  double human_offset = 1e-4;
  double human_color = 5e-2;
  double human_scale = 5e-3;
  double human_opacity = 5e-2;
  double lbs_weights = 1e-4;
};

struct FitConfig {
  LossWeights weights;
  LearningRates learning_rates;
  int iterations = 1500;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // 0 disables checkpoints
  double mask_threshold = 0.5;
  RenderSettings render;

  void validate() const;
};

nlohmann::json fit_config_to_json(const FitConfig& config);
/// Missing keys keep their defaults.
FitConfig fit_config_from_json(const nlohmann::json& doc);

struct Frame {
  Image image;
  Camera camera;
  Mask mask;
  Pose pose;

  void validate() const;
};

/// Everything the optimizer reads or updates. Only the Gaussian attributes
/// change; mesh, alignment and canonical pose are fixed.
struct FitProblem {
  BackgroundGaussians background;
  HumanGaussians human;
  SkinnedMesh mesh;
  SceneAlignment alignment;
  DaPoseConfig da_pose = DaPoseConfig::symmetric_hips();
};

/// Merged scene for one pose: background first, then the posed human.
RenderableScene compose_scene(const FitProblem& problem, const Pose& pose);

/// Loss of the current parameters on one frame.
LossBreakdown evaluate_frame(const FitProblem& problem, const Frame& frame, const FitConfig& config);
/// Frame-averaged loss.
LossBreakdown evaluate(const FitProblem& problem, const std::vector<Frame>& frames, const FitConfig& config);

struct FitResult {
  std::vector<LossBreakdown> history;  // one entry per iteration, on that iteration's frame
  std::vector<std::size_t> frame_order;
};

using CheckpointFn = std::function<void(int iteration, const FitProblem& problem)>;

/// Adam on all parameter groups. Frames are visited in seeded random epochs
/// (one frame per step); LBS weights are projected back to the simplex after
/// every step. Throws NumericalFailure on a non-finite gradient.
FitResult optimize(FitProblem& problem, const std::vector<Frame>& frames, const FitConfig& config,
                   const CheckpointFn& checkpoint = {});

}  // namespace skinsplat
