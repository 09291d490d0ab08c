#pragma once

#include "skinsplat/camera.hpp"
#include "skinsplat/geometry.hpp"

#include <cstdint>
#include <optional>
#include <span>

namespace skinsplat {

/// Plane normal . x + offset = 0 with a unit normal.
struct GroundPlane {
  Vector3 normal = Vector3::UnitZ();
  double offset = 0.0;

  double signed_distance(const Vector3& p) const { return normal.dot(p) + offset; }
  Eigen::Vector4d coefficients() const { return {normal.x(), normal.y(), normal.z(), offset}; }
};

struct PlaneFitOptions {
  int iterations = 256;
  // Meters. Defaults to 2% of the cloud's bounding-box diagonal.
  std::optional<double> inlier_threshold;
  std::uint64_t seed = 0;
};

/// RANSAC over 3-point samples, refined by least squares over the best
/// inlier set. The normal is oriented so that more points lie on its
/// positive side.
GroundPlane fit_ground_plane(const PointSet& points, const PlaneFitOptions& options = {});

/// Least-squares plane through all points (smallest principal axis).
GroundPlane fit_plane_least_squares(const PointSet& points);

struct ScaleSolution {
  double scale = 1.0;
  std::size_t joint = 0;       // joint attaining the minimum
  std::size_t discarded = 0;   // parallel rays or intersections behind the camera
};

/// Per joint, the ray C + s (J - C) meets the plane at
/// s = -(A.C + d) / (A.(J - C)); returns the smallest positive s.
ScaleSolution solve_scale(const Vector3& camera_center, const PointSet& joints, const Eigen::Vector4d& plane);
ScaleSolution solve_scale(const Vector3& camera_center, const PointSet& joints, const GroundPlane& plane);

struct Correspondence {
  Vector3 point;   // body-space 3D joint
  Vector2 pixel;
};

struct PnPOptions {
  int max_iterations = 100;
  double step_tolerance = 1e-8;
};

struct PnPResult {
  Matrix3 rotation = Matrix3::Identity();
  Vector3 translation = Vector3::Zero();
  double rms_error = 0.0;  // pixels
  int iterations = 0;
};

/// Identity rotation with the body 2 m in front of the camera.
RigidTransform default_pnp_guess();

/// Damped Gauss-Newton on the squared reprojection error with backtracking.
/// Requires at least 4 correspondences.
PnPResult solve_pnp(std::span<const Correspondence> correspondences, const Intrinsics& intrinsics,
                    const RigidTransform& initial_guess = default_pnp_guess(), const PnPOptions& options = {});

double reprojection_rms(std::span<const Correspondence> correspondences, const Intrinsics& intrinsics,
                        const Matrix3& rotation, const Vector3& translation);

/// Body-to-scene similarity x -> scale * R * x + t.
struct SceneAlignment {
  Matrix3 rotation = Matrix3::Identity();
  Vector3 translation = Vector3::Zero();
  double scale = 1.0;

  void validate() const;
};

PointSet apply_alignment(const SceneAlignment& alignment, const PointSet& points);

/// Chains the PnP body-to-camera pose, the scene camera's world-to-camera
/// extrinsics and the scale about the camera center into one body-to-world
/// alignment.
SceneAlignment compose_alignment(const Matrix3& pnp_rotation, const Vector3& pnp_translation,
                                 const Camera& scene_camera, double scale);

struct AlignmentReport {
  SceneAlignment alignment;
  GroundPlane plane;
  PnPResult pnp;
  ScaleSolution scale;
};

/// Full alignment: PnP on the joint correspondences, ground-plane fit on the
/// scene cloud, and the scale solve along the camera rays.
AlignmentReport align_body_to_scene(const PointSet& scene_cloud, std::span<const Correspondence> correspondences,
                                    const Camera& scene_camera, const PlaneFitOptions& plane_options = {},
                                    const PnPOptions& pnp_options = {});

nlohmann::json alignment_to_json(const SceneAlignment& alignment);
SceneAlignment alignment_from_json(const nlohmann::json& doc);

}  // namespace skinsplat
