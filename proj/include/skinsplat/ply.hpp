#pragma once

#include "skinsplat/geometry.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace skinsplat {

/// The "vertex" element of a PLY file as named scalar columns.
struct PlyVertexTable {
  std::size_t count = 0;
  std::vector<std::string> names;  // in file order
  std::map<std::string, std::vector<double>> columns;
  std::map<std::string, bool> integral;  // true for integer-typed properties

  bool has(const std::string& name) const { return columns.count(name) != 0; }
  const std::vector<double>& column(const std::string& name) const;
};

/// Reads ASCII or binary little-endian PLY. Other elements (faces, ...) are
/// parsed and discarded.
PlyVertexTable read_ply_vertices(const std::filesystem::path& path);

/// Writes binary little-endian PLY with float32 columns.
void write_ply_vertices(const PlyVertexTable& table, const std::filesystem::path& path);

struct PointCloud {
  PointSet positions;
  std::optional<PointSet> colors;  // [0,1]
};

/// Positions (x, y, z) plus optional red/green/blue (uchar or float).
PointCloud read_point_cloud(const std::filesystem::path& path);

}  // namespace skinsplat
