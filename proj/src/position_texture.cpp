#include "skinsplat/position_texture.hpp"

#include "skinsplat/binary_io.hpp"
#include "skinsplat/error.hpp"
#include "skinsplat/image.hpp"
#include "skinsplat/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace skinsplat {

namespace {

constexpr char kTextureMagic[8] = {'S', 'K', 'P', 'T', 'E', 'X', '\0', '\0'};
constexpr std::uint32_t kTextureVersion = 1;
// Barycentric components this close to zero count as on the edge.
constexpr double kEdgeTolerance = 1e-12;

double uv_area(const Triangle& t) {
  const Vector2 e0 = t.uvs[1] - t.uvs[0];
  const Vector2 e1 = t.uvs[2] - t.uvs[0];
  return 0.5 * std::abs(e0.x() * e1.y() - e1.x() * e0.y());
}

// Snaps near-zero components to zero and renormalizes; false if outside.
bool inside(Vector3& bary) {
  for (int k = 0; k < 3; ++k) {
    if (bary(k) < -kEdgeTolerance) return false;
    if (std::abs(bary(k)) <= kEdgeTolerance) bary(k) = 0.0;
  }
  bary /= bary.sum();
  return true;
}

}  // namespace

std::size_t PositionTexture::valid_count() const {
  return static_cast<std::size_t>(std::count_if(texels.begin(), texels.end(), [](const Texel& t) { return t.valid; }));
}

Vector3 interpolate_position(const SkinnedMesh& mesh, std::uint32_t triangle, const Vector3& bary) {
  const auto& v = mesh.triangles[triangle].vertices;
  const Vector3 a = mesh.vertices.col(v[0]);
  const Vector3 b = mesh.vertices.col(v[1]);
  const Vector3 c = mesh.vertices.col(v[2]);
  return bary(0) * a + bary(1) * b + bary(2) * c;
}

SkinWeights interpolate_weights(const SkinnedMesh& mesh, std::uint32_t triangle, const Vector3& bary) {
  std::map<std::uint16_t, double> acc;
  const auto& v = mesh.triangles[triangle].vertices;
  for (int k = 0; k < 3; ++k) {
    if (bary(k) == 0.0) continue;
    for (const auto& jw : mesh.weights[v[k]]) acc[jw.joint] += bary(k) * jw.weight;
  }
  SkinWeights row;
  for (const auto& [joint, w] : acc)
    if (w > 0.0) row.push_back({joint, w});
  normalize_weights(row);
  return row;
}

PositionTexture bake(const SkinnedMesh& mesh, int resolution) {
  require(resolution >= 1, ErrorCode::InvalidInput, "texture resolution must be at least 1");
  const bool any_area = std::any_of(mesh.triangles.begin(), mesh.triangles.end(),
                                    [](const Triangle& t) { return uv_area(t) > 0.0; });
  require(any_area, ErrorCode::EmptyTexture, "mesh has no triangle with nonzero UV area");

  PositionTexture tex;
  tex.width = resolution;
  tex.height = resolution;
  tex.texels.resize(static_cast<std::size_t>(resolution) * resolution);
  const double w = resolution;
  const double h = resolution;

  // Triangles bucketed by the texel rows their UV extent can touch, in
  // ascending triangle order so the first hit per texel is the lowest index.
  std::vector<std::vector<std::uint32_t>> rows(static_cast<std::size_t>(resolution));
  for (std::uint32_t t = 0; t < mesh.triangles.size(); ++t) {
    const Triangle& tri = mesh.triangles[t];
    if (uv_area(tri) == 0.0) continue;
    const double vmin = std::min({tri.uvs[0].y(), tri.uvs[1].y(), tri.uvs[2].y()});
    const double vmax = std::max({tri.uvs[0].y(), tri.uvs[1].y(), tri.uvs[2].y()});
    const int r0 = std::max(0, static_cast<int>(std::floor(vmin * h - 0.5)));
    const int r1 = std::min(resolution - 1, static_cast<int>(std::ceil(vmax * h - 0.5)));
    for (int r = r0; r <= r1; ++r) rows[static_cast<std::size_t>(r)].push_back(t);
  }

  parallel_for(static_cast<std::size_t>(resolution), [&](std::size_t row) {
    const int v = static_cast<int>(row);
    const double cy = (v + 0.5) / h;
    for (const std::uint32_t t : rows[row]) {
      const Triangle& tri = mesh.triangles[t];
      const double umin = std::min({tri.uvs[0].x(), tri.uvs[1].x(), tri.uvs[2].x()});
      const double umax = std::max({tri.uvs[0].x(), tri.uvs[1].x(), tri.uvs[2].x()});
      const int c0 = std::max(0, static_cast<int>(std::floor(umin * w - 0.5)));
      const int c1 = std::min(resolution - 1, static_cast<int>(std::ceil(umax * w - 0.5)));
      for (int u = c0; u <= c1; ++u) {
        Texel& texel = tex.texels[row * static_cast<std::size_t>(resolution) + static_cast<std::size_t>(u)];
        if (texel.valid) continue;
        Vector3 bary;
        if (!barycentric_2d<double>(tri.uvs[0], tri.uvs[1], tri.uvs[2], Vector2((u + 0.5) / w, cy), bary)) continue;
        if (!inside(bary)) continue;
        texel.valid = true;
        texel.triangle = t;
        texel.bary = bary;
        texel.position = interpolate_position(mesh, t, bary);
        texel.weights = interpolate_weights(mesh, t, bary);
      }
    }
  });
  return tex;
}

TexturePoints extract_points(const PositionTexture& texture) {
  const std::size_t n = texture.valid_count();
  require(n > 0, ErrorCode::EmptyTexture, "texture has no valid texels");
  TexturePoints pts;
  pts.positions.resize(3, static_cast<Eigen::Index>(n));
  pts.weights.reserve(n);
  pts.texel_index.reserve(n);
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < texture.texels.size(); ++i) {
    const Texel& t = texture.texels[i];
    if (!t.valid) continue;
    pts.positions.col(k++) = t.position;
    pts.weights.push_back(t.weights);
    pts.texel_index.push_back(static_cast<std::uint32_t>(i));
  }
  return pts;
}

std::vector<unsigned char> serialize_texture(const PositionTexture& texture) {
  ByteWriter out;
  out.put_bytes(std::string_view(kTextureMagic, sizeof kTextureMagic));
  out.put<std::uint32_t>(kTextureVersion);
  out.put<std::uint32_t>(0);  // flags
  out.put<std::uint32_t>(static_cast<std::uint32_t>(texture.width));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(texture.height));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(texture.valid_count()));
  for (std::size_t i = 0; i < texture.texels.size(); ++i) {
    const Texel& t = texture.texels[i];
    if (!t.valid) continue;
    out.put<std::uint32_t>(static_cast<std::uint32_t>(i));
    out.put<std::uint32_t>(t.triangle);
    for (int k = 0; k < 3; ++k) out.put<double>(t.bary(k));
    for (int k = 0; k < 3; ++k) out.put<double>(t.position(k));
    out.put<std::uint16_t>(static_cast<std::uint16_t>(t.weights.size()));
    for (const auto& jw : t.weights) {
      out.put<std::uint16_t>(jw.joint);
      out.put<double>(jw.weight);
    }
  }
  return out.bytes();
}

PositionTexture deserialize_texture(const std::vector<unsigned char>& bytes) {
  ByteReader in(bytes);
  require(in.get_bytes(sizeof kTextureMagic) == std::string(kTextureMagic, sizeof kTextureMagic), ErrorCode::Io,
          "not a position texture file");
  require(in.get<std::uint32_t>() == kTextureVersion, ErrorCode::Io, "unsupported position texture version");
  in.get<std::uint32_t>();
  PositionTexture tex;
  tex.width = static_cast<int>(in.get<std::uint32_t>());
  tex.height = static_cast<int>(in.get<std::uint32_t>());
  require(tex.width >= 1 && tex.height >= 1 && tex.width <= 65536 && tex.height <= 65536, ErrorCode::Io,
          "bad texture dimensions");
  tex.texels.resize(static_cast<std::size_t>(tex.width) * static_cast<std::size_t>(tex.height));
  const std::uint32_t n = in.get<std::uint32_t>();
  for (std::uint32_t k = 0; k < n; ++k) {
    const std::uint32_t idx = in.get<std::uint32_t>();
    require(idx < tex.texels.size(), ErrorCode::Io, "texel index out of range");
    Texel& t = tex.texels[idx];
    t.valid = true;
    t.triangle = in.get<std::uint32_t>();
    for (int c = 0; c < 3; ++c) t.bary(c) = in.get<double>();
    for (int c = 0; c < 3; ++c) t.position(c) = in.get<double>();
    const auto count = in.get<std::uint16_t>();
    for (std::uint16_t j = 0; j < count; ++j) {
      const auto joint = in.get<std::uint16_t>();
      t.weights.push_back({joint, in.get<double>()});
    }
  }
  require(in.at_end(), ErrorCode::Io, "trailing bytes after position texture");
  return tex;
}

void save_texture(const PositionTexture& texture, const std::filesystem::path& path) {
  write_file_bytes(path.string(), serialize_texture(texture));
}

PositionTexture load_texture(const std::filesystem::path& path) {
  return deserialize_texture(read_file_bytes(path.string()));
}

void write_texture_png(const PositionTexture& texture, const std::filesystem::path& path) {
  Vector3 lo = Vector3::Constant(std::numeric_limits<double>::infinity());
  Vector3 hi = -lo;
  for (const auto& t : texture.texels) {
    if (!t.valid) continue;
    lo = lo.cwiseMin(t.position);
    hi = hi.cwiseMax(t.position);
  }
  const Vector3 extent = (hi - lo).cwiseMax(Vector3::Constant(1e-12));
  Image img(texture.width, texture.height);
  for (int v = 0; v < texture.height; ++v)
    for (int u = 0; u < texture.width; ++u)
      if (const Texel& t = texture.at(u, v); t.valid) img.pixel(u, v) = (t.position - lo).cwiseQuotient(extent);
  write_png(img, path);
}

}  // namespace skinsplat
