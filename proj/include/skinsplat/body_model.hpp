#pragma once

#include "skinsplat/geometry.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace skinsplat {

inline constexpr std::size_t kMaxVertexInfluences = 8;
inline constexpr double kWeightSumTolerance = 1e-4;

struct JointWeight {
  std::uint16_t joint = 0;
  double weight = 0.0;

  friend bool operator==(const JointWeight&, const JointWeight&) = default;
};

/// Sparse skinning weights of a single point, sorted by joint index.
using SkinWeights = std::vector<JointWeight>;

struct Joint {
  std::string name;
  int parent = -1;  // -1 marks the root
  Vector3 rest_position = Vector3::Zero();
};

struct Triangle {
  std::array<std::uint32_t, 3> vertices{};
  std::array<Vector2, 3> uvs{};
};

/// Rest-pose skinned mesh with a joint hierarchy. Construct via
/// make_skinned_mesh (or the loaders) so the invariants are checked once.
struct SkinnedMesh {
  PointSet vertices;  // 3 x V
  std::vector<Triangle> triangles;
  std::vector<SkinWeights> weights;  // one row per vertex
  std::vector<Joint> joints;
  // 3V x K displacement basis, one column per shape coefficient. Empty if absent.
  Eigen::MatrixXd shape_dirs;

  std::size_t joint_count() const { return joints.size(); }
  std::size_t vertex_count() const { return static_cast<std::size_t>(vertices.cols()); }
  int find_joint(const std::string& name) const;
};

/// Validates and normalizes a mesh: weights are truncated to the
/// kMaxVertexInfluences largest entries and renormalized, UVs must lie in
/// [0,1]^2, indices in range and the skeleton a single-rooted tree.
SkinnedMesh make_skinned_mesh(SkinnedMesh mesh);

struct Pose {
  std::vector<Vector3> joint_rotations;  // axis-angle, radians
  Vector3 root_translation = Vector3::Zero();
  Eigen::VectorXd shape_coeffs;

  static Pose zero(std::size_t joint_count) {
    Pose p;
    p.joint_rotations.assign(joint_count, Vector3::Zero());
    return p;
  }
};

/// Per-joint rigid transforms that map rest-pose points directly to the posed
/// frame (the rest-to-joint and joint-to-target transforms already composed).
using JointTransforms = std::vector<RigidTransform>;

JointTransforms forward_kinematics(const SkinnedMesh& mesh, const Pose& pose);

/// Normalizes a sparse weight row in place. Throws on a negative or all-zero row.
void normalize_weights(SkinWeights& row);

/// Linear blend skinning of a single point.
template <typename Scalar>
Vec3<Scalar> blend_point(const Vec3<Scalar>& point, const SkinWeights& weights,
                         const std::vector<Rigid<Scalar>>& transforms) {
  Vec3<Scalar> out = Vec3<Scalar>::Zero();
  for (const auto& jw : weights) out += Scalar(jw.weight) * (transforms[jw.joint] * point);
  return out;
}

/// Linear blend skinning. Rows whose weights do not sum to 1 within
/// kWeightSumTolerance are rejected.
PointSet lbs(const PointSet& points, const std::vector<SkinWeights>& weights,
             const JointTransforms& transforms);

/// Blended 3x4 affine of a weight row: sum_j w_j * T_j.
Eigen::Matrix<double, 3, 4> blended_affine(const SkinWeights& weights, const JointTransforms& transforms);

/// Per-skeleton canonical pose configuration: the fixed joint rotations that
/// turn the rest (T) pose into the leg-abducted canonical pose.
struct DaPoseConfig {
  struct JointRotation {
    std::string joint;
    Vector3 axis_angle;
  };
  std::vector<JointRotation> rotations;

  /// Hips abducted by +/- angle about the forward axis.
  static DaPoseConfig symmetric_hips(const std::string& left_hip = "left_hip",
                                     const std::string& right_hip = "right_hip",
                                     double angle_radians = 30.0 * 3.14159265358979323846 / 180.0,
                                     const Vector3& forward_axis = Vector3::UnitZ());
};

/// The canonical pose expressed as a Pose (zero translation).
Pose da_pose(const SkinnedMesh& mesh, const DaPoseConfig& config);

/// Rest (T-pose) to canonical (Da-pose) transforms.
JointTransforms da_pose_transforms(const SkinnedMesh& mesh, const DaPoseConfig& config);

/// Canonical-to-target transforms, i.e. FK(pose) * inverse(T-to-Da) per joint.
JointTransforms canonical_to_world(const SkinnedMesh& mesh, const Pose& pose, const DaPoseConfig& config);

/// Composite canonical-to-target times T-to-Da transforms, ready to apply to
/// rest-pose points plus canonical offsets.
JointTransforms pose_from_canonical(const SkinnedMesh& mesh, const Pose& pose,
                                    const DaPoseConfig& config = DaPoseConfig::symmetric_hips());

/// Rest vertices displaced by the shape basis. Returns the rest vertices (and
/// logs a warning) if the mesh carries no basis but coefficients were given.
PointSet shaped_vertices(const SkinnedMesh& mesh, const Eigen::VectorXd& shape_coeffs);

}  // namespace skinsplat
