#pragma once

#include "skinsplat/body_model.hpp"

#include <json.hpp>

#include <filesystem>

namespace skinsplat {

// Mesh documents follow docs/formats.md ("skinsplat-mesh", version 1).
nlohmann::json mesh_to_json(const SkinnedMesh& mesh);
SkinnedMesh mesh_from_json(const nlohmann::json& doc);

SkinnedMesh load_mesh_json(const std::filesystem::path& path);
void save_mesh_json(const SkinnedMesh& mesh, const std::filesystem::path& path);

/// Wavefront OBJ geometry (v / vt / f with v/vt indices, polygons fanned into
/// triangles) merged with a weights document holding "joints" and "weights".
SkinnedMesh load_obj_with_weights(const std::filesystem::path& obj_path, const std::filesystem::path& weights_path);

}  // namespace skinsplat
