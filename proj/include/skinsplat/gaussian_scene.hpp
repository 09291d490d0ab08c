#pragma once

#include "skinsplat/body_model.hpp"
#include "skinsplat/position_texture.hpp"
#include "skinsplat/scene_alignment.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace skinsplat {

enum class Origin : std::uint8_t { Background = 0, Human = 1 };

/// Free anisotropic Gaussians. Rotations are stored as (w, x, y, z)
/// quaternions and normalized on use; colors and opacities are logits.
struct BackgroundGaussians {
  PointSet positions;
  Eigen::Matrix<double, 4, Eigen::Dynamic> rotations;
  PointSet log_scales;
  Eigen::VectorXd opacity_logits;
  PointSet color_logits;

  std::size_t size() const { return static_cast<std::size_t>(positions.cols()); }
  void resize(std::size_t n);
  void validate() const;
  Eigen::Quaterniond rotation(Eigen::Index i) const {
    return Eigen::Quaterniond(rotations(0, i), rotations(1, i), rotations(2, i), rotations(3, i)).normalized();
  }
};

/// Texel-aligned human attributes, one entry per valid texel of the position
/// texture they were initialized from. Scales are isotropic:
/// sigma = base_scale * exp(log_scale), so zero-valued grids are the
/// initialization state.
struct HumanGaussians {
  int texture_width = 0;
  int texture_height = 0;
  double base_scale = 0.01;  // canonical-space meters
  std::vector<std::uint32_t> texel_index;
  PointSet rest_positions;  // fixed
  PointSet offsets;         // canonical-space delta
  PointSet color_logits;
  Eigen::VectorXd log_scales;  // relative to base_scale
  Eigen::VectorXd opacity_logits;
  std::vector<SkinWeights> lbs_weights;

  std::size_t size() const { return texel_index.size(); }
  double sigma(Eigen::Index i) const { return base_scale * std::exp(log_scales(i)); }
  void validate() const;
};

struct HumanInit {
  Vector3 color = Vector3::Constant(0.5);
  double opacity = 0.9;
  // Isotropic scale; non-positive means "texel spacing on the surface".
  double scale = 0.0;
};

HumanGaussians init_human(const PositionTexture& texture, const HumanInit& init = {});

/// Checks that the human grid was built from this texture (same resolution,
/// valid-texel count and texel order).
void check_texture_match(const HumanGaussians& human, const PositionTexture& texture);

/// Flat world-space Gaussians ready for splatting. Opacities and colors are
/// activated values.
struct RenderableScene {
  PointSet positions;
  std::vector<Matrix3> covariances;
  Eigen::VectorXd opacities;
  PointSet colors;
  std::vector<Origin> origins;

  std::size_t size() const { return origins.size(); }
  void reserve(std::size_t n);
  void push_back(const Vector3& position, const Matrix3& covariance, double opacity, const Vector3& color, Origin origin);
};

/// R diag(exp(2 log_scale)) R^T.
Matrix3 build_covariance(const Eigen::Quaterniond& rotation, const Vector3& log_scale);

RenderableScene background_scene(const BackgroundGaussians& background);

/// Cached per-point quantities of a posed human, needed to pull gradients
/// back to the canonical attributes.
struct PosedHuman {
  RenderableScene scene;
  JointTransforms transforms;                           // rest -> posed body frame, per joint
  std::vector<Eigen::Matrix<double, 3, 4>> blended;     // sum_j w_j T_j per point
  SceneAlignment alignment;
};

PosedHuman pose_human(const HumanGaussians& human, const SkinnedMesh& mesh, const Pose& pose,
                      const SceneAlignment& alignment, const DaPoseConfig& da_pose = DaPoseConfig::symmetric_hips());

/// Background points first, then human points.
RenderableScene merge(const RenderableScene& background, const RenderableScene& human);

// Gradient pullbacks from world-space Gaussian quantities to the stored
// parameters. Inputs are per-Gaussian gradients w.r.t. position, covariance
// (symmetric), activated color and opacity logit.
struct SceneGradientView {
  const PointSet* d_position = nullptr;
  const std::vector<Matrix3>* d_covariance = nullptr;
  const PointSet* d_color = nullptr;
  const Eigen::VectorXd* d_opacity_logit = nullptr;
  Eigen::Index offset = 0;  // first Gaussian of the subset
};

struct BackgroundGradients {
  PointSet positions;
  Eigen::Matrix<double, 4, Eigen::Dynamic> rotations;
  PointSet log_scales;
  Eigen::VectorXd opacity_logits;
  PointSet color_logits;
};

struct HumanGradients {
  PointSet offsets;
  PointSet color_logits;
  Eigen::VectorXd log_scales;
  Eigen::VectorXd opacity_logits;
  std::vector<SkinWeights> lbs_weights;  // same sparsity as the parameters
};

BackgroundGradients background_backward(const BackgroundGaussians& background, const SceneGradientView& grads);
HumanGradients human_backward(const HumanGaussians& human, const PosedHuman& posed, const SceneGradientView& grads);

/// Euclidean projection of a sparse weight row onto the probability simplex.
void project_to_simplex(SkinWeights& row);

// Persistence, see docs/formats.md.
BackgroundGaussians load_background_ply(const std::filesystem::path& path);
void save_background_ply(const BackgroundGaussians& background, const std::filesystem::path& path);
std::vector<unsigned char> serialize_human(const HumanGaussians& human);
HumanGaussians deserialize_human(const std::vector<unsigned char>& bytes, const PositionTexture& texture);
void save_human(const HumanGaussians& human, const std::filesystem::path& path);
HumanGaussians load_human(const std::filesystem::path& path, const PositionTexture& texture);

/// Background plus posed human as one 3DGS-compatible PLY (human Gaussians
/// are written as isotropic with identity rotation).
void export_combined_ply(const BackgroundGaussians& background, const PosedHuman& human,
                         const HumanGaussians& attributes, const std::filesystem::path& path);

}  // namespace skinsplat
