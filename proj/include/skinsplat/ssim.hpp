#pragma once

#include "skinsplat/image.hpp"

namespace skinsplat {

struct SsimSettings {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Mean structural similarity over all fully contained windows (no padding),
/// averaged over the three channels. Both images must be at least one window
/// in each dimension.
double ssim(const Image& a, const Image& b, const SsimSettings& settings = {});

/// Same value as ssim(); writes d(ssim)/d(a) into *d_a when non-null.
double ssim_with_gradient(const Image& a, const Image& b, Image* d_a, const SsimSettings& settings = {});

/// Sub-image [x0, x0 + w) x [y0, y0 + h), alpha dropped.
Image crop(const Image& image, int x0, int y0, int w, int h);

}  // namespace skinsplat
