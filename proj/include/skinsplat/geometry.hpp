#pragma once

// Small dense-geometry kernels shared by every module. All of them are
// templated on the scalar type so they compose with Eigen expressions and can
// be evaluated in float for throughput or double for gradient checks.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <vector>

namespace skinsplat {

template <typename Scalar> using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar> using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar> using Mat2 = Eigen::Matrix<Scalar, 2, 2>;
template <typename Scalar> using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar> using Mat4 = Eigen::Matrix<Scalar, 4, 4>;
template <typename Scalar> using Points3 = Eigen::Matrix<Scalar, 3, Eigen::Dynamic>;
template <typename Scalar> using Points2 = Eigen::Matrix<Scalar, 2, Eigen::Dynamic>;
template <typename Scalar> using Rigid = Eigen::Transform<Scalar, 3, Eigen::Isometry>;

using Vector2 = Vec2<double>;
using Vector3 = Vec3<double>;
using Matrix2 = Mat2<double>;
using Matrix3 = Mat3<double>;
using Matrix4 = Mat4<double>;
using PointSet = Points3<double>;
using RigidTransform = Rigid<double>;

inline constexpr double kRodriguesEpsilon = 1e-8;

template <typename Derived>
Mat3<typename Derived::Scalar> skew(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  Mat3<Scalar> m;
  m << Scalar(0), -v(2), v(1),
       v(2), Scalar(0), -v(0),
       -v(1), v(0), Scalar(0);
  return m;
}

/// Rodrigues' formula. Angles below kRodriguesEpsilon map to the identity.
template <typename Derived>
Mat3<typename Derived::Scalar> axis_angle_to_matrix(const Eigen::MatrixBase<Derived>& axis_angle) {
  using Scalar = typename Derived::Scalar;
  const Scalar angle = axis_angle.norm();
  if (angle < Scalar(kRodriguesEpsilon)) return Mat3<Scalar>::Identity();
  const Vec3<Scalar> axis = axis_angle / angle;
  const Mat3<Scalar> k = skew(axis);
  return Mat3<Scalar>::Identity() + std::sin(angle) * k + (Scalar(1) - std::cos(angle)) * (k * k);
}

template <typename Derived>
Vec3<typename Derived::Scalar> matrix_to_axis_angle(const Eigen::MatrixBase<Derived>& rotation) {
  using Scalar = typename Derived::Scalar;
  const Eigen::AngleAxis<Scalar> aa{Mat3<Scalar>(rotation)};
  return aa.angle() * aa.axis();
}

/// Rotation angle (radians) between two rotation matrices.
template <typename DA, typename DB>
typename DA::Scalar rotation_distance(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  using Scalar = typename DA::Scalar;
  const Mat3<Scalar> rel = a.transpose() * b;
  const Scalar c = std::clamp((rel.trace() - Scalar(1)) / Scalar(2), Scalar(-1), Scalar(1));
  return std::acos(c);
}

template <typename Scalar>
Rigid<Scalar> make_rigid(const Mat3<Scalar>& rotation, const Vec3<Scalar>& translation) {
  Rigid<Scalar> t = Rigid<Scalar>::Identity();
  t.linear() = rotation;
  t.translation() = translation;
  return t;
}

/// Barycentric coordinates of p in the 2D triangle (a, b, c). Returns false for
/// a zero-area triangle.
template <typename Scalar>
bool barycentric_2d(const Vec2<Scalar>& a, const Vec2<Scalar>& b, const Vec2<Scalar>& c,
                    const Vec2<Scalar>& p, Vec3<Scalar>& bary) {
  const Vec2<Scalar> e0 = b - a;
  const Vec2<Scalar> e1 = c - a;
  const Vec2<Scalar> d = p - a;
  const Scalar det = e0.x() * e1.y() - e1.x() * e0.y();
  if (det == Scalar(0)) return false;
  const Scalar l1 = (d.x() * e1.y() - e1.x() * d.y()) / det;
  const Scalar l2 = (e0.x() * d.y() - d.x() * e0.y()) / det;
  bary = Vec3<Scalar>(Scalar(1) - l1 - l2, l1, l2);
  return true;
}

/// Covariance R * diag(exp(2 * log_scale)) * R^T.
template <typename Scalar>
Mat3<Scalar> covariance_from(const Eigen::Quaternion<Scalar>& rotation, const Vec3<Scalar>& log_scale) {
  const Mat3<Scalar> r = rotation.normalized().toRotationMatrix();
  const Vec3<Scalar> var = (Scalar(2) * log_scale).array().exp().matrix();
  return r * var.asDiagonal() * r.transpose();
}

template <typename Scalar> Scalar sigmoid(Scalar x) { return Scalar(1) / (Scalar(1) + std::exp(-x)); }
template <typename Scalar> Scalar logit(Scalar p) { return std::log(p / (Scalar(1) - p)); }

}  // namespace skinsplat
