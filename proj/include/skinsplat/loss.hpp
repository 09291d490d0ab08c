#pragma once

#include "skinsplat/gaussian_scene.hpp"
#include "skinsplat/image.hpp"

namespace skinsplat {

struct LossWeights {
  double l1 = 0.7;
  double ssim = 0.3;
  double lpips = 0.0;  // reserved; no perceptual network is bundled
  double geo = 1.0;
  double offset = 1.0;
  double scale = 1.0;

  void validate() const;
};

/// Unweighted terms. ssim and ssim_human hold 1 - SSIM clamped at 0.
struct LossBreakdown {
  double l1 = 0.0;
  double ssim = 0.0;
  double l1_human = 0.0;
  double ssim_human = 0.0;
  double geo = 0.0;
  double offset = 0.0;
  double scale = 0.0;
  double total = 0.0;
};

struct PixelRect {
  int x0 = 0;
  int y0 = 0;
  int width = 0;
  int height = 0;
  bool empty() const { return width <= 0 || height <= 0; }
};

/// Bounding box of the set pixels, grown symmetrically (and shifted inside the
/// image) to at least min_size in each dimension. Empty for an empty mask.
PixelRect mask_bounds(const Mask& mask, int min_size = 11);

/// Gradients of the total w.r.t. the full render, the human-only render and
/// the regularized human grids.
struct LossGradients {
  Image d_rendered;
  Image d_human;
  PointSet d_offsets;
  PointSet d_color_logits;
  Eigen::VectorXd d_log_scales;
  Eigen::VectorXd d_opacity_logits;
};

/// Photometric terms over the full frame plus the same terms on the mask's
/// bounding box, comparing the human-only render against the masked target,
/// plus mean-square penalties on the human offset, log-scale and raw color
/// grids. Opacity is not regularized.
LossBreakdown compute_loss(const Image& rendered, const Image& rendered_human, const Image& target, const Mask& mask,
                           const HumanGaussians& human, const LossWeights& weights, LossGradients* grads = nullptr);

}  // namespace skinsplat
