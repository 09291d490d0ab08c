#pragma once

#include "skinsplat/fit.hpp"

#include <cstdint>
#include <vector>

namespace skinsplat {

/// `count` cameras on a horizontal circle (y up) looking at `target`.
/// Camera k sits at azimuth phase + 2 pi k / count.
std::vector<Camera> ring_cameras(int count, double radius, double height, const Vector3& target, int size,
                                 double focal, double phase = 0.0);

/// Gaussians on the ground disc y = 0 and a cylindrical wall around the
/// origin, with random colors and opacities.
BackgroundGaussians synthetic_background(std::size_t count, std::uint64_t seed, double radius = 5.0,
                                         double wall_height = 3.0);

/// Arms lowered and slightly bent; used for the synthetic captures.
Pose synthetic_pose(const SkinnedMesh& mesh, double phase = 0.0);

struct SyntheticFitOptions {
  int texture_resolution = 128;
  std::size_t background_count = 500;
  int cameras = 8;
  int image_size = 64;
  double focal = 80.0;
  double camera_radius = 3.0;
  std::uint64_t seed = 1;
};

/// Ground-truth scene rendered from a camera ring, plus an initialization
/// with the same geometry and uniform gray appearance. The held-out frame
/// sits halfway between two training cameras.
struct SyntheticFit {
  PositionTexture texture;
  FitProblem truth;
  FitProblem initial;
  std::vector<Frame> frames;
  Frame held_out;
};

SyntheticFit make_synthetic_fit(const SyntheticFitOptions& options = {});

/// Renders a frame (image plus human mask) of a problem at a camera and pose.
Frame capture_frame(const FitProblem& problem, const Camera& camera, const Pose& pose,
                    const RenderSettings& settings = {}, double mask_threshold = 0.5);

/// Small isotropic Gaussians filling the view frustum of bench_camera at
/// depths 3 to 6 m.
RenderableScene bench_scene(std::size_t count, std::uint64_t seed, int width, int height);
Camera bench_camera(int width, int height);

}  // namespace skinsplat
