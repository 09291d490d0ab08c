#pragma once

#include "skinsplat/camera.hpp"
#include "skinsplat/gaussian_scene.hpp"
#include "skinsplat/image.hpp"

#include <cmath>
#include <random>

namespace skinsplat::testing {

inline Camera pinhole(int width, int height, double focal) {
  Camera cam;
  cam.intrinsics = {focal, focal, width / 2.0, height / 2.0};
  cam.width = width;
  cam.height = height;
  return cam;
}

inline Matrix3 random_rotation(std::mt19937_64& rng, double max_angle = M_PI) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, max_angle);
  Vector3 axis(n(rng), n(rng), n(rng));
  return axis_angle_to_matrix(Vector3(axis.normalized() * u(rng)));
}

/// Background-style Gaussians in front of a camera at the origin looking
/// down +z. Depths lie in [2, 4]; opacities stay well below the clamp.
inline BackgroundGaussians random_gaussians(std::uint64_t seed, std::size_t n, double spread = 0.6) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  BackgroundGaussians bg;
  bg.resize(n);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
    bg.positions.col(i) = Vector3(spread * (2 * u(rng) - 1), spread * (2 * u(rng) - 1), 2.0 + 2.0 * u(rng));
    bg.rotations.col(i) = Eigen::Vector4d(g(rng), g(rng), g(rng), g(rng));
    bg.log_scales.col(i) = Vector3(std::log(0.08 + 0.15 * u(rng)), std::log(0.08 + 0.15 * u(rng)),
                                   std::log(0.08 + 0.15 * u(rng)));
    bg.opacity_logits(i) = logit(0.15 + 0.7 * u(rng));
    bg.color_logits.col(i) = Vector3(g(rng), g(rng), g(rng));
  }
  return bg;
}

inline Image random_weights(std::uint64_t seed, int width, int height) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Image w(width, height);
  for (Eigen::Index i = 0; i < w.rgb.size(); ++i) w.rgb.data()[i] = u(rng);
  return w;
}

inline double weighted_sum(const Image& img, const Image& weights) {
  return (img.rgb.array() * weights.rgb.array()).sum();
}

inline double max_abs_diff(const Image& a, const Image& b) {
  return (a.rgb - b.rgb).cwiseAbs().maxCoeff();
}

/// |a - b| / max(|a|, |b|, floor).
inline double relative_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace skinsplat::testing
