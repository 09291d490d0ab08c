#include "skinsplat/camera.hpp"

#include "skinsplat/error.hpp"

namespace skinsplat {

using nlohmann::json;

void Camera::validate() const {
  require(intrinsics.fx > 0.0 && intrinsics.fy > 0.0, ErrorCode::InvalidInput, "focal lengths must be positive");
  require(width >= 1 && height >= 1, ErrorCode::InvalidInput, "camera image size must be positive");
  require(near_plane > 0.0, ErrorCode::InvalidInput, "near plane must be positive");
  require((rotation.transpose() * rotation - Matrix3::Identity()).norm() < 1e-6 && rotation.determinant() > 0.0,
          ErrorCode::InvalidInput, "camera rotation is not a proper rotation");
}

Camera look_at(const Vector3& eye, const Vector3& target, const Vector3& up, const Intrinsics& intrinsics,
               int width, int height) {
  const Vector3 forward = (target - eye).normalized();
  const Vector3 right = forward.cross(up).normalized();
  const Vector3 down = forward.cross(right);
  Camera cam;
  cam.intrinsics = intrinsics;
  cam.rotation.row(0) = right.transpose();
  cam.rotation.row(1) = down.transpose();
  cam.rotation.row(2) = forward.transpose();
  cam.translation = -cam.rotation * eye;
  cam.width = width;
  cam.height = height;
  return cam;
}

json camera_to_json(const Camera& c) {
  json r = json::array();
  for (int i = 0; i < 3; ++i) r.push_back({c.rotation(i, 0), c.rotation(i, 1), c.rotation(i, 2)});
  return {{"version", 1},
          {"fx", c.intrinsics.fx},
          {"fy", c.intrinsics.fy},
          {"cx", c.intrinsics.cx},
          {"cy", c.intrinsics.cy},
          {"width", c.width},
          {"height", c.height},
          {"near", c.near_plane},
          {"R", r},
          {"t", {c.translation.x(), c.translation.y(), c.translation.z()}}};
}

Camera camera_from_json(const json& doc) {
  try {
    require(doc.value("version", 1) == 1, ErrorCode::InvalidInput, "unsupported camera version");
    Camera c;
    c.intrinsics.fx = doc.at("fx").get<double>();
    c.intrinsics.fy = doc.at("fy").get<double>();
    c.intrinsics.cx = doc.at("cx").get<double>();
    c.intrinsics.cy = doc.at("cy").get<double>();
    c.width = doc.at("width").get<int>();
    c.height = doc.at("height").get<int>();
    c.near_plane = doc.value("near", 0.01);
    if (doc.contains("R"))
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) c.rotation(i, j) = doc["R"].at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(j)).get<double>();
    if (doc.contains("t"))
      for (int i = 0; i < 3; ++i) c.translation(i) = doc["t"].at(static_cast<std::size_t>(i)).get<double>();
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidInput, std::string("malformed camera document: ") + e.what());
  }
}

}  // namespace skinsplat
