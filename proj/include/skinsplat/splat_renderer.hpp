#pragma once

#include "skinsplat/camera.hpp"
#include "skinsplat/gaussian_scene.hpp"
#include "skinsplat/image.hpp"

#include <cstdint>
#include <vector>

namespace skinsplat {

/// Rasterization constants. The defaults follow common 3DGS practice.
struct RenderSettings {
  double truncation_sigma = 3.0;      // splat extent, per axis, in std devs
  double max_alpha = 0.99;            // per-splat opacity clamp
  double covariance_dilation = 0.3;   // pixel^2 added to every 2D covariance
  double min_transmittance = 1e-4;    // stop compositing below this
  // The projection Jacobian is evaluated with x/z and y/z clamped to the
  // viewport grown by this fraction of its size on every side.
  double jacobian_guard_band = 0.15;
  int tile_size = 16;
  Vector3 background = Vector3::Zero();
  bool check_transmittance = false;   // verify sum of compositing weights <= 1 per pixel
};

struct Splat2D {
  std::uint32_t index = 0;  // Gaussian index in the scene
  Vector2 mean = Vector2::Zero();
  Matrix2 cov = Matrix2::Identity();  // dilated
  Vector3 conic = Vector3::Zero();    // inverse covariance (xx, xy, yy)
  double depth = 0.0;
  Vector3 color = Vector3::Zero();
  double opacity = 0.0;
  Vector3 camera_point = Vector3::Zero();
  // Inclusive pixel bounds of the truncated footprint; empty if x0 > x1.
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;
};

struct Projection {
  std::vector<Splat2D> splats;  // scene order, culled Gaussians omitted
  std::size_t culled = 0;       // behind the near plane
  std::size_t skipped = 0;      // non-invertible 2D covariance
};

/// EWA projection: cov2d = J W V W^T J^T + dilation * I.
Projection project(const RenderableScene& scene, const Camera& camera, const RenderSettings& settings = {});

struct RenderStats {
  std::size_t culled = 0;
  std::size_t skipped = 0;
  std::size_t tile_entries = 0;
  double max_weight_sum = 0.0;  // largest per-pixel sum of compositing weights
};

/// Front-to-back compositing of depth-sorted splats. The returned image
/// carries the accumulated alpha channel.
Image render(const RenderableScene& scene, const Camera& camera, const RenderSettings& settings = {},
             RenderStats* stats = nullptr);

/// Reference back-to-front "over" compositing over the same sorted splat list
/// without early termination; used to cross-check the tiled renderer.
Image render_back_to_front(const RenderableScene& scene, const Camera& camera, const RenderSettings& settings = {});

struct GradientBuffers {
  PointSet d_color;                // w.r.t. activated color
  Eigen::VectorXd d_opacity_logit;
  PointSet d_position;             // empty unless geometry gradients were requested
  std::vector<Matrix3> d_covariance;

  bool has_geometry() const { return d_position.cols() > 0; }
};

/// Exact gradients of sum(d_image .* render(scene)) w.r.t. each Gaussian's
/// color and opacity logit, and optionally world position and covariance.
/// The forward pass is recomputed per tile.
GradientBuffers render_backward(const RenderableScene& scene, const Camera& camera, const Image& d_image,
                                const RenderSettings& settings = {}, bool geometry = true);

/// Gaussians of one origin, with their indices in the source scene.
struct SceneSubset {
  RenderableScene scene;
  std::vector<std::uint32_t> indices;
};

SceneSubset select_origin(const RenderableScene& scene, Origin origin);

struct HumanOnlyRender {
  Image image;  // black background, alpha channel filled
  Mask mask;    // accumulated alpha > mask_threshold
  SceneSubset subset;
};

HumanOnlyRender render_human_only(const RenderableScene& scene, const Camera& camera,
                                  const RenderSettings& settings = {}, double mask_threshold = 0.5);

/// Pixels where any human splat leaves visible alpha. Outside it, the human
/// contributes less than `epsilon` to every channel.
Mask human_coverage(const RenderableScene& scene, const Camera& camera, const RenderSettings& settings = {},
                    double epsilon = 5e-7);

}  // namespace skinsplat
