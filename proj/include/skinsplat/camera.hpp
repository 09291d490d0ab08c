#pragma once

#include "skinsplat/geometry.hpp"

#include <json.hpp>

namespace skinsplat {

/// Pinhole intrinsics in pixels. Pixel (x, y) has its center at (x + 0.5, y + 0.5).
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  Vector2 project(const Vector3& p_cam) const {
    return {fx * p_cam.x() / p_cam.z() + cx, fy * p_cam.y() / p_cam.z() + cy};
  }
};

/// World-to-camera pinhole camera (x right, y down, z forward).
struct Camera {
  Intrinsics intrinsics;
  Matrix3 rotation = Matrix3::Identity();
  Vector3 translation = Vector3::Zero();
  int width = 1;
  int height = 1;
  double near_plane = 0.01;

  Vector3 to_camera(const Vector3& p_world) const { return rotation * p_world + translation; }
  Vector3 center() const { return -rotation.transpose() * translation; }
  void validate() const;
};

/// Camera at `eye` looking at `target`; `up` is the world up direction.
Camera look_at(const Vector3& eye, const Vector3& target, const Vector3& up, const Intrinsics& intrinsics,
               int width, int height);

nlohmann::json camera_to_json(const Camera& camera);
Camera camera_from_json(const nlohmann::json& doc);

}  // namespace skinsplat
