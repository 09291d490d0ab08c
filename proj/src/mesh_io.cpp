#include "skinsplat/mesh_io.hpp"

#include "skinsplat/error.hpp"

#include <fstream>
#include <sstream>

namespace skinsplat {

using nlohmann::json;

namespace {

constexpr const char* kMeshFormat = "skinsplat-mesh";
constexpr int kMeshVersion = 1;

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::Io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Io, path.string() + ": " + e.what());
  }
}

Vector3 vec3_of(const json& j) {
  require(j.is_array() && j.size() == 3, ErrorCode::InvalidInput, "expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

std::vector<Joint> joints_from_json(const json& doc) {
  std::vector<Joint> joints;
  for (const auto& jj : doc.at("joints")) {
    Joint joint;
    joint.name = jj.at("name").get<std::string>();
    joint.parent = jj.value("parent", -1);
    joint.rest_position = vec3_of(jj.at("position"));
    joints.push_back(std::move(joint));
  }
  return joints;
}

std::vector<SkinWeights> weights_from_json(const json& doc) {
  std::vector<SkinWeights> weights;
  for (const auto& row : doc.at("weights")) {
    SkinWeights w;
    for (const auto& pair : row) {
      require(pair.is_array() && pair.size() == 2, ErrorCode::InvalidInput, "weight entries are [joint, weight]");
      const int joint = pair[0].get<int>();
      require(joint >= 0 && joint < 65536, ErrorCode::InvalidInput, "joint index out of range");
      w.push_back({static_cast<std::uint16_t>(joint), pair[1].get<double>()});
    }
    weights.push_back(std::move(w));
  }
  return weights;
}

}  // namespace

json mesh_to_json(const SkinnedMesh& mesh) {
  json doc;
  doc["format"] = kMeshFormat;
  doc["version"] = kMeshVersion;
  json verts = json::array();
  for (Eigen::Index i = 0; i < mesh.vertices.cols(); ++i)
    verts.push_back({mesh.vertices(0, i), mesh.vertices(1, i), mesh.vertices(2, i)});
  doc["vertices"] = std::move(verts);
  json tris = json::array();
  json uvs = json::array();
  for (const auto& t : mesh.triangles) {
    tris.push_back({t.vertices[0], t.vertices[1], t.vertices[2]});
    uvs.push_back({{t.uvs[0].x(), t.uvs[0].y()}, {t.uvs[1].x(), t.uvs[1].y()}, {t.uvs[2].x(), t.uvs[2].y()}});
  }
  doc["triangles"] = std::move(tris);
  doc["uvs"] = std::move(uvs);
  json weights = json::array();
  for (const auto& row : mesh.weights) {
    json r = json::array();
    for (const auto& jw : row) r.push_back({jw.joint, jw.weight});
    weights.push_back(std::move(r));
  }
  doc["weights"] = std::move(weights);
  json joints = json::array();
  for (const auto& j : mesh.joints)
    joints.push_back({{"name", j.name},
                      {"parent", j.parent},
                      {"position", {j.rest_position.x(), j.rest_position.y(), j.rest_position.z()}}});
  doc["joints"] = std::move(joints);
  if (mesh.shape_dirs.size() > 0) {
    json dirs = json::array();
    for (Eigen::Index r = 0; r < mesh.shape_dirs.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < mesh.shape_dirs.cols(); ++c) row.push_back(mesh.shape_dirs(r, c));
      dirs.push_back(std::move(row));
    }
    doc["shape_dirs"] = std::move(dirs);
  }
  return doc;
}

SkinnedMesh mesh_from_json(const json& doc) {
  try {
    require(doc.value("format", std::string{}) == kMeshFormat, ErrorCode::InvalidInput,
            "not a skinsplat-mesh document");
    require(doc.value("version", 0) == kMeshVersion, ErrorCode::InvalidInput, "unsupported mesh version");
    SkinnedMesh mesh;
    const auto& verts = doc.at("vertices");
    mesh.vertices.resize(3, static_cast<Eigen::Index>(verts.size()));
    for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.col(static_cast<Eigen::Index>(i)) = vec3_of(verts[i]);
    const auto& tris = doc.at("triangles");
    const auto& uvs = doc.at("uvs");
    require(tris.size() == uvs.size(), ErrorCode::InvalidInput, "triangles and uvs differ in length");
    for (std::size_t t = 0; t < tris.size(); ++t) {
      Triangle tri;
      for (int c = 0; c < 3; ++c) {
        const long idx = tris[t].at(c).get<long>();
        require(idx >= 0, ErrorCode::InvalidInput, "negative triangle index");
        tri.vertices[c] = static_cast<std::uint32_t>(idx);
        tri.uvs[c] = Vector2(uvs[t].at(c).at(0).get<double>(), uvs[t].at(c).at(1).get<double>());
      }
      mesh.triangles.push_back(tri);
    }
    mesh.weights = weights_from_json(doc);
    mesh.joints = joints_from_json(doc);
    if (doc.contains("shape_dirs")) {
      const auto& dirs = doc["shape_dirs"];
      const auto cols = dirs.empty() ? 0 : static_cast<Eigen::Index>(dirs[0].size());
      mesh.shape_dirs.resize(static_cast<Eigen::Index>(dirs.size()), cols);
      for (std::size_t r = 0; r < dirs.size(); ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
          mesh.shape_dirs(static_cast<Eigen::Index>(r), c) = dirs[r].at(static_cast<std::size_t>(c)).get<double>();
    }
    return make_skinned_mesh(std::move(mesh));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidInput, std::string("malformed mesh document: ") + e.what());
  }
}

SkinnedMesh load_mesh_json(const std::filesystem::path& path) { return mesh_from_json(read_json(path)); }

void save_mesh_json(const SkinnedMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::Io, "cannot write " + path.string());
  out << mesh_to_json(mesh).dump() << '\n';
}

SkinnedMesh load_obj_with_weights(const std::filesystem::path& obj_path, const std::filesystem::path& weights_path) {
  std::ifstream in(obj_path);
  require(in.good(), ErrorCode::Io, "cannot open " + obj_path.string());
  std::vector<Vector3> positions;
  std::vector<Vector2> texcoords;
  SkinnedMesh mesh;
  std::string line;
  int line_no = 0;
  auto parse_corner = [&](const std::string& tok, std::uint32_t& v, Vector2& uv) {
    const auto slash = tok.find('/');
    require(slash != std::string::npos, ErrorCode::InvalidInput,
            obj_path.string() + ":" + std::to_string(line_no) + ": face corner without texture coordinate");
    const long vi = std::stol(tok.substr(0, slash));
    const auto slash2 = tok.find('/', slash + 1);
    const long ti = std::stol(tok.substr(slash + 1, slash2 == std::string::npos ? std::string::npos : slash2 - slash - 1));
    const long nvert = static_cast<long>(positions.size());
    const long ntex = static_cast<long>(texcoords.size());
    const long v0 = vi < 0 ? nvert + vi : vi - 1;
    const long t0 = ti < 0 ? ntex + ti : ti - 1;
    require(v0 >= 0 && v0 < nvert && t0 >= 0 && t0 < ntex, ErrorCode::InvalidInput,
            obj_path.string() + ":" + std::to_string(line_no) + ": face index out of range");
    v = static_cast<std::uint32_t>(v0);
    uv = texcoords[static_cast<std::size_t>(t0)];
  };
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      Vector3 p;
      ls >> p.x() >> p.y() >> p.z();
      positions.push_back(p);
    } else if (tag == "vt") {
      Vector2 t;
      ls >> t.x() >> t.y();
      texcoords.push_back(t);
    } else if (tag == "f") {
      std::vector<std::string> corners;
      for (std::string tok; ls >> tok;) corners.push_back(tok);
      require(corners.size() >= 3, ErrorCode::InvalidInput, "face with fewer than 3 corners");
      std::vector<std::uint32_t> vi(corners.size());
      std::vector<Vector2> ti(corners.size());
      for (std::size_t c = 0; c < corners.size(); ++c) parse_corner(corners[c], vi[c], ti[c]);
      for (std::size_t c = 1; c + 1 < corners.size(); ++c)
        mesh.triangles.push_back({{vi[0], vi[c], vi[c + 1]}, {ti[0], ti[c], ti[c + 1]}});
    }
  }
  mesh.vertices.resize(3, static_cast<Eigen::Index>(positions.size()));
  for (std::size_t i = 0; i < positions.size(); ++i) mesh.vertices.col(static_cast<Eigen::Index>(i)) = positions[i];
  const json doc = read_json(weights_path);
  try {
    mesh.joints = joints_from_json(doc);
    mesh.weights = weights_from_json(doc);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidInput, std::string("malformed weights document: ") + e.what());
  }
  return make_skinned_mesh(std::move(mesh));
}

}  // namespace skinsplat
