#include "skinsplat/loss.hpp"

#include "skinsplat/error.hpp"
#include "skinsplat/ssim.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <mutex>

namespace skinsplat {

void LossWeights::validate() const {
  for (double v : {l1, ssim, lpips, geo, offset, scale})
    require(v >= 0.0 && std::isfinite(v), ErrorCode::InvalidInput, "loss weights must be finite and non-negative");
}

PixelRect mask_bounds(const Mask& mask, int min_size) {
  int x0 = mask.width, y0 = mask.height, x1 = -1, y1 = -1;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y)) {
        x0 = std::min(x0, x), x1 = std::max(x1, x);
        y0 = std::min(y0, y), y1 = std::max(y1, y);
      }
  if (x1 < 0) return {};
  const auto grow = [&](int& lo, int& hi, int limit) {
    const int need = std::min(min_size, limit) - (hi - lo + 1);
    if (need <= 0) return;
    lo -= need / 2;
    hi += need - need / 2;
    if (lo < 0) hi -= lo, lo = 0;
    if (hi > limit - 1) lo -= hi - (limit - 1), hi = limit - 1;
  };
  grow(x0, x1, mask.width);
  grow(y0, y1, mask.height);
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

namespace {

// Mean absolute difference and its gradient w.r.t. a (sign / count).
double l1_with_gradient(const Image& a, const Image& b, Image* d_a) {
  const auto diff = (a.rgb - b.rgb).array();
  const double n = static_cast<double>(diff.size());
  if (d_a) {
    *d_a = Image(a.width, a.height);
    d_a->rgb = diff.sign().matrix() / n;
  }
  return diff.abs().sum() / n;
}

double mean_square(const auto& m) { return m.size() == 0 ? 0.0 : m.squaredNorm() / static_cast<double>(m.size()); }

}  // namespace

LossBreakdown compute_loss(const Image& rendered, const Image& rendered_human, const Image& target, const Mask& mask,
                           const HumanGaussians& human, const LossWeights& weights, LossGradients* grads) {
  weights.validate();
  require(rendered.same_shape(target) && rendered_human.same_shape(target), ErrorCode::InvalidInput,
          "rendered and target images differ in size");
  require(mask.width == target.width && mask.height == target.height, ErrorCode::InvalidInput,
          "mask does not match the target image");
  if (weights.lpips > 0.0) spdlog::warn("perceptual loss weight {} ignored: no perceptual network available", weights.lpips);

  LossBreakdown out;
  Image d_l1, d_ssim;
  out.l1 = l1_with_gradient(rendered, target, grads ? &d_l1 : nullptr);
  const double s = ssim_with_gradient(rendered, target, grads ? &d_ssim : nullptr);
  out.ssim = std::max(0.0, 1.0 - s);
  if (grads) {
    grads->d_rendered = Image(target.width, target.height);
    grads->d_rendered.rgb = weights.l1 * d_l1.rgb - (s < 1.0 ? weights.ssim : 0.0) * d_ssim.rgb;
    grads->d_human = Image(target.width, target.height);
  }

  const PixelRect box = mask_bounds(mask);
  if (box.empty()) {
    static std::once_flag warned;
    std::call_once(warned, [] { spdlog::warn("empty human mask: human photometric terms set to 0"); });
  } else {
    Image masked = crop(target, box.x0, box.y0, box.width, box.height);
    for (int y = 0; y < box.height; ++y)
      for (int x = 0; x < box.width; ++x)
        if (!mask.at(box.x0 + x, box.y0 + y)) masked.pixel(x, y).setZero();
    const Image human_crop = crop(rendered_human, box.x0, box.y0, box.width, box.height);
    Image d_l1h, d_ssimh;
    out.l1_human = l1_with_gradient(human_crop, masked, grads ? &d_l1h : nullptr);
    const double sh = ssim_with_gradient(human_crop, masked, grads ? &d_ssimh : nullptr);
    out.ssim_human = std::max(0.0, 1.0 - sh);
    if (grads) {
      const double ws = sh < 1.0 ? weights.ssim : 0.0;
      for (int y = 0; y < box.height; ++y)
        for (int x = 0; x < box.width; ++x)
          grads->d_human.pixel(box.x0 + x, box.y0 + y) = weights.l1 * d_l1h.pixel(x, y) - ws * d_ssimh.pixel(x, y);
    }
  }

  out.geo = mean_square(human.color_logits);
  out.offset = mean_square(human.offsets);
  out.scale = mean_square(human.log_scales);
  if (grads) {
    grads->d_color_logits = human.color_logits.size()
                                ? (2.0 * weights.geo / static_cast<double>(human.color_logits.size())) * human.color_logits
                                : human.color_logits;
    grads->d_opacity_logits = Eigen::VectorXd::Zero(human.opacity_logits.size());
    grads->d_offsets = human.offsets.size() ? (2.0 * weights.offset / static_cast<double>(human.offsets.size())) * human.offsets
                                            : human.offsets;
    grads->d_log_scales = human.log_scales.size()
                              ? (2.0 * weights.scale / static_cast<double>(human.log_scales.size())) * human.log_scales
                              : human.log_scales;
  }

  out.total = weights.l1 * (out.l1 + out.l1_human) + weights.ssim * (out.ssim + out.ssim_human) +
              weights.geo * out.geo + weights.offset * out.offset + weights.scale * out.scale;
  return out;
}

}  // namespace skinsplat
