#include "skinsplat/ply.hpp"

#include "skinsplat/binary_io.hpp"
#include "skinsplat/error.hpp"

#include <fstream>
#include <sstream>

namespace skinsplat {

namespace {

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

PlyType parse_type(const std::string& s) {
  if (s == "char" || s == "int8") return PlyType::Int8;
  if (s == "uchar" || s == "uint8") return PlyType::UInt8;
  if (s == "short" || s == "int16") return PlyType::Int16;
  if (s == "ushort" || s == "uint16") return PlyType::UInt16;
  if (s == "int" || s == "int32") return PlyType::Int32;
  if (s == "uint" || s == "uint32") return PlyType::UInt32;
  if (s == "float" || s == "float32") return PlyType::Float32;
  if (s == "double" || s == "float64") return PlyType::Float64;
  throw Error(ErrorCode::Io, "unknown PLY type '" + s + "'");
}

double read_binary(ByteReader& in, PlyType t) {
  switch (t) {
    case PlyType::Int8: return in.get<std::int8_t>();
    case PlyType::UInt8: return in.get<std::uint8_t>();
    case PlyType::Int16: return in.get<std::int16_t>();
    case PlyType::UInt16: return in.get<std::uint16_t>();
    case PlyType::Int32: return in.get<std::int32_t>();
    case PlyType::UInt32: return in.get<std::uint32_t>();
    case PlyType::Float32: return in.get<float>();
    case PlyType::Float64: return in.get<double>();
  }
  return 0.0;
}

struct Property {
  std::string name;
  PlyType type = PlyType::Float32;
  bool is_list = false;
  PlyType count_type = PlyType::UInt8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> properties;
};

}  // namespace

const std::vector<double>& PlyVertexTable::column(const std::string& name) const {
  const auto it = columns.find(name);
  require(it != columns.end(), ErrorCode::InvalidInput, "PLY vertex property '" + name + "' missing");
  return it->second;
}

PlyVertexTable read_ply_vertices(const std::filesystem::path& path) {
  const std::vector<unsigned char> bytes = read_file_bytes(path.string());
  const std::string header_end = "end_header";
  std::size_t pos = 0;
  std::vector<Element> elements;
  std::string format;
  bool saw_magic = false;
  while (true) {
    const std::size_t eol = std::find(bytes.begin() + static_cast<long>(pos), bytes.end(), '\n') - bytes.begin();
    require(eol < bytes.size(), ErrorCode::Io, path.string() + ": unterminated PLY header");
    std::string line(bytes.begin() + static_cast<long>(pos), bytes.begin() + static_cast<long>(eol));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = eol + 1;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (!saw_magic) {
      require(tag == "ply", ErrorCode::Io, path.string() + " is not a PLY file");
      saw_magic = true;
    } else if (tag == "format") {
      ls >> format;
    } else if (tag == "element") {
      Element e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (tag == "property") {
      require(!elements.empty(), ErrorCode::Io, "PLY property before element");
      Property p;
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string count_type, item_type;
        ls >> count_type >> item_type >> p.name;
        p.is_list = true;
        p.count_type = parse_type(count_type);
        p.type = parse_type(item_type);
      } else {
        p.type = parse_type(type);
        ls >> p.name;
      }
      elements.back().properties.push_back(p);
    } else if (tag == header_end) {
      break;
    }
  }
  require(format == "ascii" || format == "binary_little_endian", ErrorCode::Io,
          "unsupported PLY format '" + format + "'");

  PlyVertexTable table;
  const std::vector<unsigned char> body(bytes.begin() + static_cast<long>(pos), bytes.end());
  ByteReader bin(body);
  std::istringstream text(format == "ascii" ? std::string(body.begin(), body.end()) : std::string{});
  const auto next_value = [&](PlyType t) -> double {
    if (format != "ascii") return read_binary(bin, t);
    double v = 0.0;
    text >> v;
    require(!text.fail(), ErrorCode::Io, path.string() + ": truncated ASCII PLY body");
    return v;
  };
  for (const Element& e : elements) {
    const bool is_vertex = e.name == "vertex";
    if (is_vertex) {
      table.count = e.count;
      for (const auto& p : e.properties) {
        if (p.is_list) continue;
        table.names.push_back(p.name);
        table.integral[p.name] = p.type != PlyType::Float32 && p.type != PlyType::Float64;
        table.columns[p.name].reserve(e.count);
      }
    }
    for (std::size_t i = 0; i < e.count; ++i) {
      for (const auto& p : e.properties) {
        if (p.is_list) {
          const auto n = static_cast<std::size_t>(next_value(p.count_type));
          for (std::size_t k = 0; k < n; ++k) next_value(p.type);
        } else {
          const double v = next_value(p.type);
          if (is_vertex) table.columns[p.name].push_back(v);
        }
      }
    }
  }
  return table;
}

void write_ply_vertices(const PlyVertexTable& table, const std::filesystem::path& path) {
  ByteWriter out;
  std::ostringstream header;
  header << "ply\nformat binary_little_endian 1.0\nelement vertex " << table.count << '\n';
  for (const auto& n : table.names) header << "property float " << n << '\n';
  header << "end_header\n";
  out.put_bytes(header.str());
  for (std::size_t i = 0; i < table.count; ++i)
    for (const auto& n : table.names) out.put<float>(static_cast<float>(table.column(n)[i]));
  write_file_bytes(path.string(), out.bytes());
}

PointCloud read_point_cloud(const std::filesystem::path& path) {
  const PlyVertexTable t = read_ply_vertices(path);
  PointCloud cloud;
  cloud.positions.resize(3, static_cast<Eigen::Index>(t.count));
  const auto& x = t.column("x");
  const auto& y = t.column("y");
  const auto& z = t.column("z");
  for (std::size_t i = 0; i < t.count; ++i) cloud.positions.col(static_cast<Eigen::Index>(i)) = Vector3(x[i], y[i], z[i]);
  if (t.has("red") && t.has("green") && t.has("blue")) {
    const auto& r = t.column("red");
    const auto& g = t.column("green");
    const auto& b = t.column("blue");
    PointSet colors(3, static_cast<Eigen::Index>(t.count));
    for (std::size_t i = 0; i < t.count; ++i) colors.col(static_cast<Eigen::Index>(i)) = Vector3(r[i], g[i], b[i]);
    if (t.integral.at("red")) colors /= 255.0;
    cloud.colors = std::move(colors);
  }
  return cloud;
}

}  // namespace skinsplat
