#include "skinsplat/gaussian_scene.hpp"

#include "skinsplat/binary_io.hpp"
#include "skinsplat/error.hpp"
#include "skinsplat/ply.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace skinsplat {

namespace {

constexpr double kShC0 = 0.28209479177387814;
constexpr char kHumanMagic[8] = {'S', 'K', 'H', 'U', 'M', 'A', 'N', '\0'};
constexpr std::uint32_t kHumanVersion = 1;

double clamped_logit(double p) { return logit(std::clamp(p, 1e-4, 1.0 - 1e-4)); }

Vector3 sigmoid3(const Vector3& v) { return v.unaryExpr([](double x) { return sigmoid(x); }); }

SkinWeights normalized(const SkinWeights& row) {
  SkinWeights out = row;
  normalize_weights(out);
  return out;
}

// Derivatives of the rotation matrix of a unit quaternion (w, x, y, z).
std::array<Matrix3, 4> rotation_jacobian(const Eigen::Quaterniond& q) {
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  std::array<Matrix3, 4> d;
  d[0] << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0;
  d[1] << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
  d[2] << -4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y;
  d[3] << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0;
  return d;
}

double median_neighbor_spacing(const PositionTexture& texture) {
  std::vector<double> d;
  for (int v = 0; v < texture.height; ++v) {
    for (int u = 0; u < texture.width; ++u) {
      const Texel& t = texture.at(u, v);
      if (!t.valid) continue;
      if (u + 1 < texture.width && texture.at(u + 1, v).valid)
        d.push_back((texture.at(u + 1, v).position - t.position).norm());
      if (v + 1 < texture.height && texture.at(u, v + 1).valid)
        d.push_back((texture.at(u, v + 1).position - t.position).norm());
    }
  }
  if (d.empty()) return 0.01;
  std::nth_element(d.begin(), d.begin() + static_cast<long>(d.size() / 2), d.end());
  return std::max(d[d.size() / 2], 1e-6);
}

}  // namespace

void BackgroundGaussians::resize(std::size_t n) {
  const auto c = static_cast<Eigen::Index>(n);
  positions.setZero(3, c);
  rotations.setZero(4, c);
  rotations.row(0).setOnes();
  log_scales.setZero(3, c);
  opacity_logits.setZero(c);
  color_logits.setZero(3, c);
}

void BackgroundGaussians::validate() const {
  const Eigen::Index n = positions.cols();
  require(rotations.cols() == n && log_scales.cols() == n && opacity_logits.size() == n && color_logits.cols() == n,
          ErrorCode::InvalidInput, "background attribute arrays differ in length");
  for (Eigen::Index i = 0; i < n; ++i)
    require(rotations.col(i).norm() > 0.0, ErrorCode::InvalidInput, "zero background quaternion");
  require(positions.allFinite() && rotations.allFinite() && log_scales.allFinite() && opacity_logits.allFinite() &&
              color_logits.allFinite(),
          ErrorCode::InvalidInput, "non-finite background attribute");
}

void HumanGaussians::validate() const {
  const auto n = static_cast<Eigen::Index>(texel_index.size());
  require(rest_positions.cols() == n && offsets.cols() == n && color_logits.cols() == n && log_scales.size() == n &&
              opacity_logits.size() == n && lbs_weights.size() == texel_index.size(),
          ErrorCode::InvalidInput, "human attribute arrays differ in length");
  require(base_scale > 0.0 && std::isfinite(base_scale), ErrorCode::InvalidInput, "human base scale must be positive");
}

HumanGaussians init_human(const PositionTexture& texture, const HumanInit& init) {
  const TexturePoints pts = extract_points(texture);
  HumanGaussians h;
  h.texture_width = texture.width;
  h.texture_height = texture.height;
  h.texel_index = pts.texel_index;
  h.rest_positions = pts.positions;
  h.lbs_weights = pts.weights;
  const auto n = static_cast<Eigen::Index>(pts.size());
  h.offsets.setZero(3, n);
  h.color_logits.resize(3, n);
  h.color_logits.colwise() = init.color.unaryExpr([](double c) { return clamped_logit(c); });
  h.base_scale = init.scale > 0.0 ? init.scale : 0.6 * median_neighbor_spacing(texture);
  h.log_scales.setZero(n);
  h.opacity_logits.setConstant(n, clamped_logit(init.opacity));
  return h;
}

void check_texture_match(const HumanGaussians& human, const PositionTexture& texture) {
  require(human.texture_width == texture.width && human.texture_height == texture.height, ErrorCode::InvalidInput,
          "human attributes were built for a different texture resolution");
  const TexturePoints pts = extract_points(texture);
  require(pts.texel_index == human.texel_index, ErrorCode::InvalidInput,
          "human texel count " + std::to_string(human.size()) + " does not match the texture's " +
              std::to_string(pts.size()) + " valid texels");
}

void RenderableScene::reserve(std::size_t n) {
  covariances.reserve(n);
  origins.reserve(n);
}

void RenderableScene::push_back(const Vector3& position, const Matrix3& covariance, double opacity,
                                const Vector3& color, Origin origin) {
  const Eigen::Index n = positions.cols();
  positions.conservativeResize(3, n + 1);
  positions.col(n) = position;
  colors.conservativeResize(3, n + 1);
  colors.col(n) = color;
  opacities.conservativeResize(n + 1);
  opacities(n) = opacity;
  covariances.push_back(covariance);
  origins.push_back(origin);
}

Matrix3 build_covariance(const Eigen::Quaterniond& rotation, const Vector3& log_scale) {
  return covariance_from<double>(rotation, log_scale);
}

RenderableScene background_scene(const BackgroundGaussians& bg) {
  bg.validate();
  const auto n = static_cast<Eigen::Index>(bg.size());
  RenderableScene s;
  s.positions = bg.positions;
  s.colors = bg.color_logits.unaryExpr([](double x) { return sigmoid(x); });
  s.opacities = bg.opacity_logits.unaryExpr([](double x) { return sigmoid(x); });
  s.covariances.resize(bg.size());
  for (Eigen::Index i = 0; i < n; ++i)
    s.covariances[static_cast<std::size_t>(i)] = build_covariance(bg.rotation(i), bg.log_scales.col(i));
  s.origins.assign(bg.size(), Origin::Background);
  return s;
}

PosedHuman pose_human(const HumanGaussians& human, const SkinnedMesh& mesh, const Pose& pose,
                      const SceneAlignment& alignment, const DaPoseConfig& da_pose) {
  human.validate();
  alignment.validate();
  PosedHuman out;
  out.alignment = alignment;
  out.transforms = pose_from_canonical(mesh, pose, da_pose);
  const auto n = static_cast<Eigen::Index>(human.size());
  out.blended.resize(human.size());
  PointSet body(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const SkinWeights w = normalized(human.lbs_weights[k]);
    for (const auto& jw : w)
      require(jw.joint < out.transforms.size(), ErrorCode::InvalidInput, "human weight references unknown joint");
    out.blended[k] = blended_affine(w, out.transforms);
    body.col(i) = out.blended[k] * (human.rest_positions.col(i) + human.offsets.col(i)).homogeneous();
  }
  RenderableScene& s = out.scene;
  s.positions = apply_alignment(alignment, body);
  s.colors = human.color_logits.unaryExpr([](double x) { return sigmoid(x); });
  s.opacities = human.opacity_logits.unaryExpr([](double x) { return sigmoid(x); });
  s.covariances.resize(human.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sigma = human.sigma(i) * alignment.scale;
    s.covariances[static_cast<std::size_t>(i)] = sigma * sigma * Matrix3::Identity();
  }
  s.origins.assign(human.size(), Origin::Human);
  return out;
}

RenderableScene merge(const RenderableScene& background, const RenderableScene& human) {
  RenderableScene s;
  const Eigen::Index nb = background.positions.cols();
  const Eigen::Index nh = human.positions.cols();
  s.positions.resize(3, nb + nh);
  s.positions << background.positions, human.positions;
  s.colors.resize(3, nb + nh);
  s.colors << background.colors, human.colors;
  s.opacities.resize(nb + nh);
  s.opacities << background.opacities, human.opacities;
  s.covariances = background.covariances;
  s.covariances.insert(s.covariances.end(), human.covariances.begin(), human.covariances.end());
  s.origins = background.origins;
  s.origins.insert(s.origins.end(), human.origins.begin(), human.origins.end());
  return s;
}

BackgroundGradients background_backward(const BackgroundGaussians& bg, const SceneGradientView& g) {
  const auto n = static_cast<Eigen::Index>(bg.size());
  BackgroundGradients out;
  out.positions.setZero(3, n);
  out.rotations.setZero(4, n);
  out.log_scales.setZero(3, n);
  out.opacity_logits.setZero(n);
  out.color_logits.setZero(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index k = g.offset + i;
    if (g.d_position) out.positions.col(i) = g.d_position->col(k);
    if (g.d_opacity_logit) out.opacity_logits(i) = (*g.d_opacity_logit)(k);
    if (g.d_color) {
      const Vector3 c = sigmoid3(bg.color_logits.col(i));
      out.color_logits.col(i) = g.d_color->col(k).cwiseProduct(c.cwiseProduct(Vector3::Ones() - c));
    }
    if (g.d_covariance) {
      const Matrix3& dv = (*g.d_covariance)[static_cast<std::size_t>(k)];
      const Eigen::Quaterniond q = bg.rotation(i);
      const Matrix3 r = q.toRotationMatrix();
      const Vector3 var = (2.0 * bg.log_scales.col(i)).array().exp().matrix();
      const Matrix3 rtgr = r.transpose() * dv * r;
      for (int a = 0; a < 3; ++a) out.log_scales(a, i) = 2.0 * var(a) * rtgr(a, a);
      const Matrix3 d_r = 2.0 * dv * r * var.asDiagonal();
      const auto dr_dq = rotation_jacobian(q);
      Eigen::Vector4d d_unit;
      for (int a = 0; a < 4; ++a) d_unit(a) = d_r.cwiseProduct(dr_dq[static_cast<std::size_t>(a)]).sum();
      const Eigen::Vector4d raw = bg.rotations.col(i);
      const double norm = raw.norm();
      const Eigen::Vector4d unit = raw / norm;
      out.rotations.col(i) = (d_unit - unit * unit.dot(d_unit)) / norm;
    }
  }
  return out;
}

HumanGradients human_backward(const HumanGaussians& human, const PosedHuman& posed, const SceneGradientView& g) {
  const auto n = static_cast<Eigen::Index>(human.size());
  HumanGradients out;
  out.offsets.setZero(3, n);
  out.color_logits.setZero(3, n);
  out.log_scales.setZero(n);
  out.opacity_logits.setZero(n);
  out.lbs_weights.resize(human.size());
  const Matrix3 sr = posed.alignment.scale * posed.alignment.rotation;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ki = static_cast<std::size_t>(i);
    const Eigen::Index k = g.offset + i;
    if (g.d_opacity_logit) out.opacity_logits(i) = (*g.d_opacity_logit)(k);
    if (g.d_color) {
      const Vector3 c = sigmoid3(human.color_logits.col(i));
      out.color_logits.col(i) = g.d_color->col(k).cwiseProduct(c.cwiseProduct(Vector3::Ones() - c));
    }
    if (g.d_covariance) {
      const double sigma = human.sigma(i) * posed.alignment.scale;
      out.log_scales(i) = 2.0 * sigma * sigma * (*g.d_covariance)[ki].trace();
    }
    const SkinWeights& raw = human.lbs_weights[ki];
    out.lbs_weights[ki] = raw;
    for (auto& jw : out.lbs_weights[ki]) jw.weight = 0.0;
    if (g.d_position) {
      const Vector3 gp = g.d_position->col(k);
      const Vector3 gw = sr.transpose() * gp;
      out.offsets.col(i) = posed.blended[ki].leftCols<3>().transpose() * gw;
      const Vector3 canonical = human.rest_positions.col(i) + human.offsets.col(i);
      double sum = 0.0;
      for (const auto& jw : raw) sum += jw.weight;
      // Weights are normalized before use; differentiate through w / sum(w).
      double mean_term = 0.0;
      std::vector<double> d_norm(raw.size());
      for (std::size_t j = 0; j < raw.size(); ++j) {
        d_norm[j] = gw.dot(posed.transforms[raw[j].joint] * canonical);
        mean_term += raw[j].weight / sum * d_norm[j];
      }
      for (std::size_t j = 0; j < raw.size(); ++j) out.lbs_weights[ki][j].weight = (d_norm[j] - mean_term) / sum;
    }
  }
  return out;
}

void project_to_simplex(SkinWeights& row) {
  require(!row.empty(), ErrorCode::InvalidInput, "cannot project an empty weight row");
  std::vector<double> sorted(row.size());
  std::transform(row.begin(), row.end(), sorted.begin(), [](const JointWeight& jw) { return jw.weight; });
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    cumulative += sorted[k];
    const double t = (cumulative - 1.0) / static_cast<double>(k + 1);
    if (sorted[k] - t > 0.0) theta = t;
  }
  for (auto& jw : row) jw.weight = std::max(jw.weight - theta, 0.0);
}

BackgroundGaussians load_background_ply(const std::filesystem::path& path) {
  const PlyVertexTable t = read_ply_vertices(path);
  BackgroundGaussians bg;
  bg.resize(t.count);
  const auto col = [&](const std::string& name) -> const std::vector<double>& { return t.column(name); };
  for (std::size_t i = 0; i < t.count; ++i)
    bg.positions.col(static_cast<Eigen::Index>(i)) = Vector3(col("x")[i], col("y")[i], col("z")[i]);
  if (t.has("f_dc_0")) {
    for (std::size_t i = 0; i < t.count; ++i) {
      const auto c = static_cast<Eigen::Index>(i);
      for (int k = 0; k < 3; ++k) {
        bg.color_logits(k, c) = clamped_logit(0.5 + kShC0 * col("f_dc_" + std::to_string(k))[i]);
        bg.log_scales(k, c) = col("scale_" + std::to_string(k))[i];
      }
      for (int k = 0; k < 4; ++k) bg.rotations(k, c) = col("rot_" + std::to_string(k))[i];
      bg.opacity_logits(c) = col("opacity")[i];
    }
  } else {
    // Plain point cloud: colors from RGB when present, isotropic scales from
    // the mean spacing implied by the bounding box.
    const PointCloud cloud = read_point_cloud(path);
    const Vector3 extent = cloud.positions.rowwise().maxCoeff() - cloud.positions.rowwise().minCoeff();
    const double spacing = std::max(extent.norm() / std::cbrt(std::max<double>(static_cast<double>(t.count), 1.0)), 1e-4);
    for (std::size_t i = 0; i < t.count; ++i) {
      const auto c = static_cast<Eigen::Index>(i);
      const Vector3 rgb = cloud.colors ? Vector3(cloud.colors->col(c)) : Vector3::Constant(0.5);
      bg.color_logits.col(c) = rgb.unaryExpr([](double v) { return clamped_logit(v); });
      bg.log_scales.col(c).setConstant(std::log(0.5 * spacing));
      bg.opacity_logits(c) = clamped_logit(0.1);
    }
  }
  bg.validate();
  return bg;
}

namespace {

void append_gaussian(PlyVertexTable& t, const Vector3& p, const Vector3& color, double opacity_logit,
                     const Vector3& log_scale, const Eigen::Vector4d& rot) {
  const auto put = [&](const std::string& name, double v) { t.columns[name].push_back(v); };
  put("x", p.x());
  put("y", p.y());
  put("z", p.z());
  put("nx", 0.0);
  put("ny", 0.0);
  put("nz", 0.0);
  for (int k = 0; k < 3; ++k) put("f_dc_" + std::to_string(k), (color(k) - 0.5) / kShC0);
  put("opacity", opacity_logit);
  for (int k = 0; k < 3; ++k) put("scale_" + std::to_string(k), log_scale(k));
  for (int k = 0; k < 4; ++k) put("rot_" + std::to_string(k), rot(k));
  ++t.count;
}

PlyVertexTable gaussian_table() {
  PlyVertexTable t;
  t.names = {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
             "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"};
  for (const auto& n : t.names) t.columns[n];
  return t;
}

}  // namespace

void save_background_ply(const BackgroundGaussians& bg, const std::filesystem::path& path) {
  PlyVertexTable t = gaussian_table();
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(bg.size()); ++i)
    append_gaussian(t, bg.positions.col(i), sigmoid3(bg.color_logits.col(i)), bg.opacity_logits(i),
                    bg.log_scales.col(i), bg.rotations.col(i));
  write_ply_vertices(t, path);
}

void export_combined_ply(const BackgroundGaussians& bg, const PosedHuman& posed, const HumanGaussians& human,
                         const std::filesystem::path& path) {
  PlyVertexTable t = gaussian_table();
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(bg.size()); ++i)
    append_gaussian(t, bg.positions.col(i), sigmoid3(bg.color_logits.col(i)), bg.opacity_logits(i),
                    bg.log_scales.col(i), bg.rotations.col(i));
  const double log_align = std::log(posed.alignment.scale);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(human.size()); ++i)
    append_gaussian(t, posed.scene.positions.col(i), posed.scene.colors.col(i), human.opacity_logits(i),
                    Vector3::Constant(std::log(human.sigma(i)) + log_align), Eigen::Vector4d(1, 0, 0, 0));
  write_ply_vertices(t, path);
}

std::vector<unsigned char> serialize_human(const HumanGaussians& h) {
  h.validate();
  ByteWriter out;
  out.put_bytes(std::string_view(kHumanMagic, sizeof kHumanMagic));
  out.put<std::uint32_t>(kHumanVersion);
  out.put<std::uint32_t>(0);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(h.texture_width));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(h.texture_height));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(h.size()));
  out.put<double>(h.base_scale);
  for (std::size_t k = 0; k < h.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    out.put<std::uint32_t>(h.texel_index[k]);
    for (int c = 0; c < 3; ++c) out.put<double>(h.offsets(c, i));
    for (int c = 0; c < 3; ++c) out.put<double>(h.color_logits(c, i));
    out.put<double>(h.log_scales(i));
    out.put<double>(h.opacity_logits(i));
    out.put<std::uint16_t>(static_cast<std::uint16_t>(h.lbs_weights[k].size()));
    for (const auto& jw : h.lbs_weights[k]) {
      out.put<std::uint16_t>(jw.joint);
      out.put<double>(jw.weight);
    }
  }
  return out.bytes();
}

HumanGaussians deserialize_human(const std::vector<unsigned char>& bytes, const PositionTexture& texture) {
  ByteReader in(bytes);
  require(in.get_bytes(sizeof kHumanMagic) == std::string(kHumanMagic, sizeof kHumanMagic), ErrorCode::Io,
          "not a human attribute file");
  require(in.get<std::uint32_t>() == kHumanVersion, ErrorCode::Io, "unsupported human attribute version");
  in.get<std::uint32_t>();
  HumanGaussians h;
  h.texture_width = static_cast<int>(in.get<std::uint32_t>());
  h.texture_height = static_cast<int>(in.get<std::uint32_t>());
  const std::uint32_t n = in.get<std::uint32_t>();
  h.base_scale = in.get<double>();
  require(h.base_scale > 0.0 && std::isfinite(h.base_scale), ErrorCode::Io, "invalid human base scale");
  const TexturePoints pts = extract_points(texture);
  require(h.texture_width == texture.width && h.texture_height == texture.height && n == pts.size(),
          ErrorCode::InvalidInput, "human attribute file does not match the position texture");
  const auto cols = static_cast<Eigen::Index>(n);
  h.rest_positions = pts.positions;
  h.offsets.resize(3, cols);
  h.color_logits.resize(3, cols);
  h.log_scales.resize(cols);
  h.opacity_logits.resize(cols);
  h.texel_index.resize(n);
  h.lbs_weights.resize(n);
  for (std::uint32_t k = 0; k < n; ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    h.texel_index[k] = in.get<std::uint32_t>();
    require(h.texel_index[k] == pts.texel_index[k], ErrorCode::InvalidInput, "human texel order differs from texture");
    for (int c = 0; c < 3; ++c) h.offsets(c, i) = in.get<double>();
    for (int c = 0; c < 3; ++c) h.color_logits(c, i) = in.get<double>();
    h.log_scales(i) = in.get<double>();
    h.opacity_logits(i) = in.get<double>();
    const auto count = in.get<std::uint16_t>();
    for (std::uint16_t j = 0; j < count; ++j) {
      const auto joint = in.get<std::uint16_t>();
      h.lbs_weights[k].push_back({joint, in.get<double>()});
    }
  }
  require(in.at_end(), ErrorCode::Io, "trailing bytes after human attributes");
  return h;
}

void save_human(const HumanGaussians& human, const std::filesystem::path& path) {
  write_file_bytes(path.string(), serialize_human(human));
}

HumanGaussians load_human(const std::filesystem::path& path, const PositionTexture& texture) {
  return deserialize_human(read_file_bytes(path.string()), texture);
}

}  // namespace skinsplat
