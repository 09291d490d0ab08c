#pragma once

#include "skinsplat/body_model.hpp"

#include <filesystem>
#include <vector>

namespace skinsplat {

struct Texel {
  bool valid = false;
  Vector3 position = Vector3::Zero();  // rest pose
  SkinWeights weights;
  std::uint32_t triangle = 0;
  Vector3 bary = Vector3::Zero();
};

/// UV-space raster of the rest-pose surface. Texel (u, v) sits at row v,
/// column u and covers UV center ((u + 0.5) / width, (v + 0.5) / height).
struct PositionTexture {
  int width = 0;
  int height = 0;
  std::vector<Texel> texels;  // row-major

  std::size_t valid_count() const;
  const Texel& at(int u, int v) const { return texels[static_cast<std::size_t>(v) * width + u]; }
};

/// Barycentric combination of a triangle's rest vertices, evaluated in a fixed
/// order so stored positions can be reproduced exactly.
Vector3 interpolate_position(const SkinnedMesh& mesh, std::uint32_t triangle, const Vector3& bary);

/// Union of the three vertices' joint sets weighted by bary, renormalized.
SkinWeights interpolate_weights(const SkinnedMesh& mesh, std::uint32_t triangle, const Vector3& bary);

/// Bakes a square resolution x resolution texture. A texel is valid iff its
/// center lies inside at least one UV triangle; overlaps resolve to the lowest
/// triangle index.
PositionTexture bake(const SkinnedMesh& mesh, int resolution);

/// Dense point set of the valid texels in row-major order.
struct TexturePoints {
  PointSet positions;
  std::vector<SkinWeights> weights;
  std::vector<std::uint32_t> texel_index;  // v * width + u

  std::size_t size() const { return texel_index.size(); }
};

TexturePoints extract_points(const PositionTexture& texture);

// Binary texture format, see docs/formats.md.
std::vector<unsigned char> serialize_texture(const PositionTexture& texture);
PositionTexture deserialize_texture(const std::vector<unsigned char>& bytes);
void save_texture(const PositionTexture& texture, const std::filesystem::path& path);
PositionTexture load_texture(const std::filesystem::path& path);

/// Debug visualization: positions normalized to their bounding box as RGB,
/// invalid texels black.
void write_texture_png(const PositionTexture& texture, const std::filesystem::path& path);

}  // namespace skinsplat
