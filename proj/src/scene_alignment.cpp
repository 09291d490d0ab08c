#include "skinsplat/scene_alignment.hpp"

#include "skinsplat/error.hpp"

#include <Eigen/Eigenvalues>
#include <spdlog/spdlog.h>

#include <cmath>
#include <limits>
#include <random>

namespace skinsplat {

using nlohmann::json;

namespace {

constexpr double kParallelRayTolerance = 1e-9;

GroundPlane orient(GroundPlane plane, const PointSet& points, double threshold) {
  std::size_t above = 0, below = 0;
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    const double d = plane.signed_distance(points.col(i));
    if (d > threshold) ++above;
    else if (d < -threshold) ++below;
  }
  bool flip = below > above;
  if (above == below) {
    // No majority: make the dominant normal component positive.
    Eigen::Index k;
    plane.normal.cwiseAbs().maxCoeff(&k);
    flip = plane.normal(k) < 0.0;
  }
  if (flip) {
    plane.normal = -plane.normal;
    plane.offset = -plane.offset;
  }
  return plane;
}

}  // namespace

GroundPlane fit_plane_least_squares(const PointSet& points) {
  require(points.cols() >= 3, ErrorCode::InvalidInput, "plane fit needs at least 3 points");
  const Vector3 centroid = points.rowwise().mean();
  const PointSet centered = points.colwise() - centroid;
  const Eigen::SelfAdjointEigenSolver<Matrix3> eig(centered * centered.transpose());
  // Eigenvalues ascend; the second one vanishes only for collinear points.
  require(eig.eigenvalues()(1) > 1e-18 * std::max(1.0, eig.eigenvalues()(2)), ErrorCode::NoPlane,
          "points are collinear");
  GroundPlane plane;
  plane.normal = eig.eigenvectors().col(0).normalized();
  plane.offset = -plane.normal.dot(centroid);
  return plane;
}

GroundPlane fit_ground_plane(const PointSet& points, const PlaneFitOptions& options) {
  const Eigen::Index n = points.cols();
  require(n >= 3, ErrorCode::InvalidInput, "plane fit needs at least 3 points");
  require(options.iterations >= 1, ErrorCode::InvalidInput, "RANSAC needs at least one iteration");
  const double diagonal = (points.rowwise().maxCoeff() - points.rowwise().minCoeff()).norm();
  const double threshold = options.inlier_threshold.value_or(0.02 * diagonal);
  require(threshold >= 0.0, ErrorCode::InvalidInput, "inlier threshold must be nonnegative");

  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  std::size_t best_count = 0;
  GroundPlane best;
  bool found = false;
  for (int it = 0; it < options.iterations; ++it) {
    Eigen::Index a = 0, b = 1, c = 2;
    if (n > 3) {
      a = pick(rng);
      do b = pick(rng); while (b == a);
      do c = pick(rng); while (c == a || c == b);
    }
    const Vector3 pa = points.col(a);
    const Vector3 cross = (points.col(b) - pa).cross(points.col(c) - pa);
    const double scale = std::max({(points.col(b) - pa).squaredNorm(), (points.col(c) - pa).squaredNorm(), 1e-300});
    if (cross.norm() <= 1e-12 * scale) continue;
    GroundPlane candidate;
    candidate.normal = cross.normalized();
    candidate.offset = -candidate.normal.dot(pa);
    std::size_t count = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (std::abs(candidate.signed_distance(points.col(i))) <= threshold) ++count;
    // Strictly greater keeps the earliest sample on ties.
    if (!found || count > best_count) {
      best = candidate;
      best_count = count;
      found = true;
    }
  }
  require(found, ErrorCode::NoPlane, "every RANSAC sample was degenerate");

  std::vector<Eigen::Index> inliers;
  for (Eigen::Index i = 0; i < n; ++i)
    if (std::abs(best.signed_distance(points.col(i))) <= threshold) inliers.push_back(i);
  if (inliers.size() >= 3) {
    PointSet subset(3, static_cast<Eigen::Index>(inliers.size()));
    for (std::size_t k = 0; k < inliers.size(); ++k) subset.col(static_cast<Eigen::Index>(k)) = points.col(inliers[k]);
    try {
      best = fit_plane_least_squares(subset);
    } catch (const Error&) {
      // Collinear inliers: keep the sampled plane.
    }
  }
  return orient(best, points, threshold);
}

ScaleSolution solve_scale(const Vector3& camera_center, const PointSet& joints, const Eigen::Vector4d& plane) {
  require(joints.cols() >= 1, ErrorCode::InvalidInput, "scale solve needs at least one joint");
  const double norm = plane.head<3>().norm();
  require(norm > 0.0, ErrorCode::InvalidInput, "plane normal is zero");
  const Vector3 a = plane.head<3>() / norm;
  const double d = plane(3) / norm;
  const double numerator = -(a.dot(camera_center) + d);
  require(numerator != 0.0, ErrorCode::InvalidInput, "camera center lies on the ground plane");

  ScaleSolution best;
  best.scale = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < joints.cols(); ++j) {
    const double denom = a.dot(joints.col(j) - camera_center);
    if (std::abs(denom) < kParallelRayTolerance) {
      ++best.discarded;
      continue;
    }
    const double s = numerator / denom;
    if (s <= 0.0) {
      ++best.discarded;
      continue;
    }
    if (s < best.scale) {
      best.scale = s;
      best.joint = static_cast<std::size_t>(j);
    }
  }
  require(std::isfinite(best.scale), ErrorCode::NoScale, "no joint ray meets the ground plane in front of the camera");
  if (best.discarded > 0)
    spdlog::warn("{} of {} joint rays never reach the ground plane; the body may not be standing on it",
                 best.discarded, joints.cols());
  return best;
}

ScaleSolution solve_scale(const Vector3& camera_center, const PointSet& joints, const GroundPlane& plane) {
  return solve_scale(camera_center, joints, plane.coefficients());
}

RigidTransform default_pnp_guess() { return make_rigid<double>(Matrix3::Identity(), Vector3(0.0, 0.0, 2.0)); }

double reprojection_rms(std::span<const Correspondence> correspondences, const Intrinsics& k, const Matrix3& r,
                        const Vector3& t) {
  double sum = 0.0;
  for (const auto& c : correspondences) {
    const Vector3 pc = r * c.point + t;
    if (pc.z() <= 0.0) return std::numeric_limits<double>::infinity();
    sum += (k.project(pc) - c.pixel).squaredNorm();
  }
  return std::sqrt(sum / static_cast<double>(correspondences.size()));
}

PnPResult solve_pnp(std::span<const Correspondence> correspondences, const Intrinsics& k,
                    const RigidTransform& initial_guess, const PnPOptions& options) {
  const std::size_t n = correspondences.size();
  require(n >= 4, ErrorCode::InvalidInput, "PnP needs at least 4 correspondences, got " + std::to_string(n));
  require(k.fx > 0.0 && k.fy > 0.0, ErrorCode::InvalidInput, "focal lengths must be positive");

  Matrix3 rot = initial_guess.linear();
  Vector3 trans = initial_guess.translation();
  const auto cost_of = [&](const Matrix3& r, const Vector3& t) {
    const double rms = reprojection_rms(correspondences, k, r, t);
    return rms * rms * static_cast<double>(n);
  };
  double cost = cost_of(rot, trans);
  require(std::isfinite(cost), ErrorCode::DegenerateConfiguration, "initial guess puts points behind the camera");

  PnPResult result;
  double damping = 0.0;
  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    result.iterations = iter;
    Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    for (const auto& c : correspondences) {
      const Vector3 rp = rot * c.point;
      const Vector3 pc = rp + trans;
      const double iz = 1.0 / pc.z();
      Eigen::Matrix<double, 2, 3> dproj;
      dproj << k.fx * iz, 0.0, -k.fx * pc.x() * iz * iz,
               0.0, k.fy * iz, -k.fy * pc.y() * iz * iz;
      Eigen::Matrix<double, 3, 6> dpoint;
      dpoint << -skew(rp), Matrix3::Identity();
      const Eigen::Matrix<double, 2, 6> jac = dproj * dpoint;
      const Vector2 res = k.project(pc) - c.pixel;
      h += jac.transpose() * jac;
      g += jac.transpose() * res;
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> eig(h, Eigen::EigenvaluesOnly);
    require(eig.eigenvalues()(0) > 1e-12 * std::max(eig.eigenvalues()(5), 1e-300), ErrorCode::DegenerateConfiguration,
            "singular PnP normal equations");

    bool accepted = false;
    bool converged = false;
    while (!accepted) {
      Eigen::Matrix<double, 6, 6> damped = h;
      damped.diagonal() *= 1.0 + damping;
      const Eigen::Matrix<double, 6, 1> step = -damped.ldlt().solve(g);
      if (step.norm() < options.step_tolerance) {
        converged = true;
        break;
      }
      // Backtracking along the step; the cost never increases.
      double scale = 1.0;
      for (int bt = 0; bt < 12 && !accepted; ++bt, scale *= 0.5) {
        const Matrix3 r_new = axis_angle_to_matrix(Vector3(scale * step.head<3>())) * rot;
        const Vector3 t_new = trans + scale * step.tail<3>();
        const double c_new = cost_of(r_new, t_new);
        if (c_new <= cost) {
          rot = r_new;
          trans = t_new;
          accepted = true;
          converged = scale * step.norm() < options.step_tolerance || c_new == cost;
          cost = c_new;
        }
      }
      if (!accepted) {
        damping = damping == 0.0 ? 1e-4 : damping * 10.0;
        if (damping > 1e12) {
          converged = true;
          break;
        }
      }
    }
    if (accepted) damping = damping < 1e-6 ? 0.0 : damping * 0.1;
    if (converged) break;
  }
  // Re-orthonormalize against drift from repeated products.
  const Eigen::JacobiSVD<Matrix3> svd(rot, Eigen::ComputeFullU | Eigen::ComputeFullV);
  result.rotation = svd.matrixU() * svd.matrixV().transpose();
  result.translation = trans;
  result.rms_error = reprojection_rms(correspondences, k, result.rotation, result.translation);
  return result;
}

void SceneAlignment::validate() const {
  require((rotation.transpose() * rotation - Matrix3::Identity()).norm() < 1e-6 && rotation.determinant() > 0.0,
          ErrorCode::InvalidInput, "alignment rotation is not a proper rotation");
  require(scale > 0.0 && std::isfinite(scale), ErrorCode::InvalidInput, "alignment scale must be positive");
}

PointSet apply_alignment(const SceneAlignment& a, const PointSet& points) {
  return ((a.scale * a.rotation) * points).colwise() + a.translation;
}

SceneAlignment compose_alignment(const Matrix3& pnp_rotation, const Vector3& pnp_translation, const Camera& cam,
                                 double scale) {
  SceneAlignment out;
  out.rotation = cam.rotation.transpose() * pnp_rotation;
  out.translation = cam.rotation.transpose() * (scale * pnp_translation - cam.translation);
  out.scale = scale;
  return out;
}

AlignmentReport align_body_to_scene(const PointSet& scene_cloud, std::span<const Correspondence> correspondences,
                                    const Camera& scene_camera, const PlaneFitOptions& plane_options,
                                    const PnPOptions& pnp_options) {
  AlignmentReport report;
  report.pnp = solve_pnp(correspondences, scene_camera.intrinsics, default_pnp_guess(), pnp_options);
  report.plane = fit_ground_plane(scene_cloud, plane_options);
  // Joints in world coordinates at the PnP (unit) scale.
  PointSet joints(3, static_cast<Eigen::Index>(correspondences.size()));
  for (std::size_t i = 0; i < correspondences.size(); ++i) {
    const Vector3 pc = report.pnp.rotation * correspondences[i].point + report.pnp.translation;
    joints.col(static_cast<Eigen::Index>(i)) = scene_camera.rotation.transpose() * (pc - scene_camera.translation);
  }
  report.scale = solve_scale(scene_camera.center(), joints, report.plane);
  report.alignment = compose_alignment(report.pnp.rotation, report.pnp.translation, scene_camera, report.scale.scale);
  return report;
}

json alignment_to_json(const SceneAlignment& a) {
  json r = json::array();
  for (int i = 0; i < 3; ++i) r.push_back({a.rotation(i, 0), a.rotation(i, 1), a.rotation(i, 2)});
  return {{"version", 1}, {"R", r}, {"t", {a.translation.x(), a.translation.y(), a.translation.z()}}, {"scale", a.scale}};
}

SceneAlignment alignment_from_json(const json& doc) {
  try {
    SceneAlignment a;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) a.rotation(i, j) = doc.at("R").at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(j)).get<double>();
      a.translation(i) = doc.at("t").at(static_cast<std::size_t>(i)).get<double>();
    }
    a.scale = doc.at("scale").get<double>();
    a.validate();
    return a;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidInput, std::string("malformed alignment document: ") + e.what());
  }
}

}  // namespace skinsplat
