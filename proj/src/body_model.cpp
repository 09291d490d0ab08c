#include "skinsplat/body_model.hpp"

#include "skinsplat/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <functional>

namespace skinsplat {

int SkinnedMesh::find_joint(const std::string& name) const {
  for (std::size_t j = 0; j < joints.size(); ++j)
    if (joints[j].name == name) return static_cast<int>(j);
  return -1;
}

void normalize_weights(SkinWeights& row) {
  double sum = 0.0;
  for (const auto& jw : row) {
    require(jw.weight >= 0.0 && std::isfinite(jw.weight), ErrorCode::InvalidInput, "negative skinning weight");
    sum += jw.weight;
  }
  require(sum > 0.0, ErrorCode::InvalidInput, "skinning weight row sums to zero");
  for (auto& jw : row) jw.weight /= sum;
}

namespace {

// Returns joints ordered so that every parent precedes its children.
std::vector<std::size_t> topological_order(const std::vector<Joint>& joints) {
  const std::size_t n = joints.size();
  std::vector<std::vector<std::size_t>> children(n);
  std::vector<std::size_t> roots;
  for (std::size_t j = 0; j < n; ++j) {
    const int p = joints[j].parent;
    if (p < 0) {
      roots.push_back(j);
    } else {
      require(static_cast<std::size_t>(p) < n && static_cast<std::size_t>(p) != j, ErrorCode::InvalidInput,
              "joint '" + joints[j].name + "' has an invalid parent index");
      children[static_cast<std::size_t>(p)].push_back(j);
    }
  }
  require(roots.size() == 1, ErrorCode::InvalidInput,
          "skeleton must have exactly one root, found " + std::to_string(roots.size()));
  std::vector<std::size_t> order;
  order.reserve(n);
  std::vector<std::size_t> stack = roots;
  while (!stack.empty()) {
    const std::size_t j = stack.back();
    stack.pop_back();
    order.push_back(j);
    for (auto it = children[j].rbegin(); it != children[j].rend(); ++it) stack.push_back(*it);
  }
  require(order.size() == n, ErrorCode::InvalidInput, "skeleton contains a cycle");
  return order;
}

}  // namespace

SkinnedMesh make_skinned_mesh(SkinnedMesh mesh) {
  const std::size_t nv = mesh.vertex_count();
  const std::size_t nj = mesh.joint_count();
  require(nj > 0, ErrorCode::InvalidInput, "mesh has no joints");
  topological_order(mesh.joints);
  require(mesh.weights.size() == nv, ErrorCode::InvalidInput, "weights must have one row per vertex");
  for (std::size_t i = 0; i < nv; ++i) {
    auto& row = mesh.weights[i];
    require(!row.empty(), ErrorCode::InvalidInput, "vertex " + std::to_string(i) + " has no skinning weights");
    for (const auto& jw : row)
      require(jw.joint < nj, ErrorCode::InvalidInput, "skinning weight references unknown joint");
    std::sort(row.begin(), row.end(), [](const auto& a, const auto& b) { return a.weight > b.weight; });
    if (row.size() > kMaxVertexInfluences) row.resize(kMaxVertexInfluences);
    std::sort(row.begin(), row.end(), [](const auto& a, const auto& b) { return a.joint < b.joint; });
    for (std::size_t k = 1; k < row.size(); ++k)
      require(row[k].joint != row[k - 1].joint, ErrorCode::InvalidInput, "duplicate joint in weight row");
    normalize_weights(row);
  }
  for (const auto& tri : mesh.triangles) {
    for (int c = 0; c < 3; ++c) {
      require(tri.vertices[c] < nv, ErrorCode::InvalidInput, "triangle index out of range");
      const Vector2& uv = tri.uvs[c];
      require(uv.x() >= 0.0 && uv.x() <= 1.0 && uv.y() >= 0.0 && uv.y() <= 1.0, ErrorCode::InvalidInput,
              "UV coordinate outside [0,1]^2");
    }
  }
  if (mesh.shape_dirs.size() > 0)
    require(static_cast<std::size_t>(mesh.shape_dirs.rows()) == 3 * nv, ErrorCode::InvalidInput,
            "shape_dirs must have 3 rows per vertex");
  return mesh;
}

JointTransforms forward_kinematics(const SkinnedMesh& mesh, const Pose& pose) {
  const std::size_t nj = mesh.joint_count();
  require(pose.joint_rotations.size() == nj, ErrorCode::InvalidInput,
          "pose has " + std::to_string(pose.joint_rotations.size()) + " joint rotations, skeleton has " +
              std::to_string(nj));

  // World transforms of the joint frames, then shifted so they act on rest-pose points.
  std::vector<RigidTransform> global(nj, RigidTransform::Identity());
  for (const std::size_t j : topological_order(mesh.joints)) {
    const Joint& joint = mesh.joints[j];
    const Matrix3 rot = axis_angle_to_matrix(pose.joint_rotations[j]);
    if (joint.parent < 0) {
      global[j] = make_rigid<double>(rot, joint.rest_position + pose.root_translation);
    } else {
      const Joint& parent = mesh.joints[static_cast<std::size_t>(joint.parent)];
      const RigidTransform local = make_rigid<double>(rot, joint.rest_position - parent.rest_position);
      global[j] = global[static_cast<std::size_t>(joint.parent)] * local;
    }
  }
  JointTransforms out(nj);
  for (std::size_t j = 0; j < nj; ++j) {
    out[j] = global[j];
    out[j].translation() -= global[j].linear() * mesh.joints[j].rest_position;
  }
  return out;
}

Eigen::Matrix<double, 3, 4> blended_affine(const SkinWeights& weights, const JointTransforms& transforms) {
  Eigen::Matrix<double, 3, 4> m = Eigen::Matrix<double, 3, 4>::Zero();
  for (const auto& jw : weights) m += jw.weight * transforms[jw.joint].matrix().topRows<3>();
  return m;
}

PointSet lbs(const PointSet& points, const std::vector<SkinWeights>& weights, const JointTransforms& transforms) {
  require(static_cast<std::size_t>(points.cols()) == weights.size(), ErrorCode::InvalidInput,
          "point and weight counts differ");
  PointSet out(3, points.cols());
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    const auto& row = weights[static_cast<std::size_t>(i)];
    double sum = 0.0;
    for (const auto& jw : row) {
      require(jw.joint < transforms.size(), ErrorCode::InvalidInput, "weight references unknown joint");
      sum += jw.weight;
    }
    require(std::abs(sum - 1.0) <= kWeightSumTolerance, ErrorCode::InvalidInput,
            "weight row " + std::to_string(i) + " is not normalized");
    out.col(i) = blend_point<double>(points.col(i), row, transforms);
  }
  return out;
}

DaPoseConfig DaPoseConfig::symmetric_hips(const std::string& left_hip, const std::string& right_hip,
                                          double angle_radians, const Vector3& forward_axis) {
  const Vector3 axis = forward_axis.normalized();
  return DaPoseConfig{{{left_hip, angle_radians * axis}, {right_hip, -angle_radians * axis}}};
}

Pose da_pose(const SkinnedMesh& mesh, const DaPoseConfig& config) {
  Pose pose = Pose::zero(mesh.joint_count());
  for (const auto& r : config.rotations) {
    const int j = mesh.find_joint(r.joint);
    require(j >= 0, ErrorCode::InvalidInput, "canonical pose names unknown joint '" + r.joint + "'");
    pose.joint_rotations[static_cast<std::size_t>(j)] = r.axis_angle;
  }
  return pose;
}

JointTransforms da_pose_transforms(const SkinnedMesh& mesh, const DaPoseConfig& config) {
  return forward_kinematics(mesh, da_pose(mesh, config));
}

JointTransforms canonical_to_world(const SkinnedMesh& mesh, const Pose& pose, const DaPoseConfig& config) {
  const JointTransforms target = forward_kinematics(mesh, pose);
  const JointTransforms to_da = da_pose_transforms(mesh, config);
  JointTransforms out(target.size());
  for (std::size_t j = 0; j < target.size(); ++j) out[j] = target[j] * to_da[j].inverse();
  return out;
}

JointTransforms pose_from_canonical(const SkinnedMesh& mesh, const Pose& pose, const DaPoseConfig& config) {
  const JointTransforms to_da = da_pose_transforms(mesh, config);
  const JointTransforms da_to_world = canonical_to_world(mesh, pose, config);
  JointTransforms out(to_da.size());
  for (std::size_t j = 0; j < to_da.size(); ++j) out[j] = da_to_world[j] * to_da[j];
  return out;
}

PointSet shaped_vertices(const SkinnedMesh& mesh, const Eigen::VectorXd& shape_coeffs) {
  if (shape_coeffs.size() == 0) return mesh.vertices;
  if (mesh.shape_dirs.size() == 0) {
    spdlog::warn("shape coefficients given but the mesh has no shape basis; ignoring them");
    return mesh.vertices;
  }
  require(shape_coeffs.size() <= mesh.shape_dirs.cols(), ErrorCode::InvalidInput,
          "more shape coefficients than shape basis columns");
  const Eigen::VectorXd offsets = mesh.shape_dirs.leftCols(shape_coeffs.size()) * shape_coeffs;
  PointSet out = mesh.vertices;
  out += Eigen::Map<const PointSet>(offsets.data(), 3, out.cols());
  return out;
}

}  // namespace skinsplat
