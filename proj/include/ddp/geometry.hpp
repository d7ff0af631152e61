#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <cmath>
#include <vector>

#include "ddp/errors.hpp"
#include "ddp/rng.hpp"

namespace ddp {

/// End-effector pose: position plus unit quaternion.
struct Pose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
};

/// Returns q or -q so that the scalar part is non-negative. Both represent
/// the same rotation; the canonical form makes log_map single-valued.
inline Eigen::Quaterniond canonical(const Eigen::Quaterniond& q) {
  if (q.w() < 0.0) return Eigen::Quaterniond(-q.w(), -q.x(), -q.y(), -q.z());
  return q;
}

/// Rotation-vector logarithm. The result has norm <= pi and is invariant
/// under the quaternion double cover (log_map(q) == log_map(-q)).
inline Eigen::Vector3d log_map(const Eigen::Quaterniond& q_in) {
  const Eigen::Quaterniond q = canonical(q_in.normalized());
  const Eigen::Vector3d v(q.x(), q.y(), q.z());
  const double s = v.norm();  // sin(theta / 2), theta in [0, pi]
  if (s < 1e-8) return 2.0 / q.w() * v;
  const double theta = 2.0 * std::atan2(s, q.w());
  return (theta / s) * v;
}

/// Quaternion exponential of a rotation vector.
inline Eigen::Quaterniond exp_map(const Eigen::Vector3d& r) {
  const double theta = r.norm();
  double scale;  // sin(theta / 2) / theta
  if (theta < 1e-8) {
    scale = 0.5 - theta * theta / 48.0;
  } else {
    scale = std::sin(0.5 * theta) / theta;
  }
  const Eigen::Vector3d v = scale * r;
  return Eigen::Quaterniond(std::cos(0.5 * theta), v.x(), v.y(), v.z());
}

inline Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

/// Right Jacobian of SO(3): Exp(r + d) ~ Exp(r) * Exp(Jr(r) d).
inline Eigen::Matrix3d so3_right_jacobian(const Eigen::Vector3d& r) {
  const double theta = r.norm();
  double a;  // (1 - cos) / theta^2
  double b;  // (theta - sin) / theta^3
  if (theta < 1e-4) {
    const double t2 = theta * theta;
    a = 0.5 - t2 / 24.0;
    b = 1.0 / 6.0 - t2 / 120.0;
  } else {
    a = (1.0 - std::cos(theta)) / (theta * theta);
    b = (theta - std::sin(theta)) / (theta * theta * theta);
  }
  const Eigen::Matrix3d rx = skew(r);
  return Eigen::Matrix3d::Identity() - a * rx + b * rx * rx;
}

/// Spherical interpolation along the shorter arc, with a normalized-lerp
/// fallback when the inputs are nearly aligned.
inline Eigen::Quaterniond slerp(const Eigen::Quaterniond& qa, const Eigen::Quaterniond& qb_in,
                                double t) {
  Eigen::Quaterniond qb = qb_in;
  double dot = qa.dot(qb);
  if (dot < 0.0) {
    qb = Eigen::Quaterniond(-qb.w(), -qb.x(), -qb.y(), -qb.z());
    dot = -dot;
  }
  if (dot > 1.0 - 1e-6) {
    // Nearly parallel: slerp denominator degenerates, nlerp is exact enough.
    Eigen::Quaterniond out(qa.w() + t * (qb.w() - qa.w()), qa.x() + t * (qb.x() - qa.x()),
                           qa.y() + t * (qb.y() - qa.y()), qa.z() + t * (qb.z() - qa.z()));
    out.normalize();
    return out;
  }
  const double omega = std::acos(std::min(1.0, dot));
  const double so = std::sin(omega);
  const double wa = std::sin((1.0 - t) * omega) / so;
  const double wb = std::sin(t * omega) / so;
  return Eigen::Quaterniond(wa * qa.w() + wb * qb.w(), wa * qa.x() + wb * qb.x(),
                            wa * qa.y() + wb * qb.y(), wa * qa.z() + wb * qb.z());
}

/// Linear position, slerp orientation.
inline Pose interpolate(const Pose& a, const Pose& b, double t) {
  Pose out;
  out.position = (1.0 - t) * a.position + t * b.position;
  out.orientation = slerp(a.orientation, b.orientation, t);
  return out;
}

/// Squared pose distance: |p_a - p_b|^2 + |Log(R_a^T R_b)|^2.
inline double se3_distance(const Pose& a, const Pose& b) {
  const Eigen::Vector3d dr = log_map(a.orientation.conjugate() * b.orientation);
  return (a.position - b.position).squaredNorm() + dr.squaredNorm();
}

/// Gradient of se3_distance with respect to the first pose, parameterized as
/// (position, rotation vector r with Exp(r) = R_a). The rotation part uses
/// d|Log(Exp(r)^T R_g)|^2 / dr = -2 Jr(r)^T u with u = Log(Exp(r)^T R_g).
inline void se3_distance_gradient(const Eigen::Vector3d& position, const Eigen::Vector3d& rotvec,
                                  const Pose& goal, Eigen::Vector3d& d_position,
                                  Eigen::Vector3d& d_rotvec) {
  d_position = 2.0 * (position - goal.position);
  const Eigen::Quaterniond q = exp_map(rotvec);
  const Eigen::Vector3d u = log_map(q.conjugate() * goal.orientation);
  d_rotvec = -2.0 * so3_right_jacobian(rotvec).transpose() * u;
}

/// Uniform random rotation (Shoemake's method).
inline Eigen::Quaterniond random_unit_quaternion(Rng& rng) {
  const double u1 = rng.uniform();
  const double u2 = rng.uniform();
  const double u3 = rng.uniform();
  const double a = std::sqrt(1.0 - u1);
  const double b = std::sqrt(u1);
  const Eigen::Quaterniond q(b * std::cos(2.0 * M_PI * u3), a * std::sin(2.0 * M_PI * u2),
                             a * std::cos(2.0 * M_PI * u2), b * std::sin(2.0 * M_PI * u3));
  return canonical(q.normalized());
}

/// Sequence of end-effector poses.
struct Trajectory {
  std::vector<Pose> poses;

  std::size_t size() const { return poses.size(); }
};

/// Waypoint coordinate layouts: rows of the flattened matrix.
enum class CoordMode {
  kPosition,  // (x, y, z)
  kFullPose,  // (x, y, z, rx, ry, rz), rotation vector
};

inline int coord_dims(CoordMode mode) { return mode == CoordMode::kPosition ? 3 : 6; }

/// One waypoint per row: positions, plus rotation vectors in full-pose mode.
inline Eigen::MatrixXd flatten(const Trajectory& traj, CoordMode mode) {
  const int d = coord_dims(mode);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(traj.size()), d);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const Pose& p = traj.poses[static_cast<std::size_t>(i)];
    m.row(i).head<3>() = p.position.transpose();
    if (mode == CoordMode::kFullPose) m.row(i).tail<3>() = log_map(p.orientation).transpose();
  }
  return m;
}

/// Inverse of flatten. In position mode every pose gets `fixed_orientation`.
inline Trajectory unflatten(const Eigen::MatrixXd& m, CoordMode mode,
                            const Eigen::Quaterniond& fixed_orientation =
                                Eigen::Quaterniond::Identity()) {
  if (m.cols() != coord_dims(mode))
    throw ConfigError("unflatten: expected " + std::to_string(coord_dims(mode)) +
                      " columns, got " + std::to_string(m.cols()));
  Trajectory traj;
  traj.poses.resize(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Pose& p = traj.poses[static_cast<std::size_t>(i)];
    p.position = m.row(i).head<3>().transpose();
    p.orientation =
        mode == CoordMode::kFullPose ? exp_map(m.row(i).tail<3>().transpose()) : fixed_orientation;
  }
  return traj;
}

/// Flattened row for a single pose, matching the flatten layout.
inline Eigen::VectorXd pose_row(const Pose& p, CoordMode mode) {
  Eigen::VectorXd row(coord_dims(mode));
  row.head<3>() = p.position;
  if (mode == CoordMode::kFullPose) row.tail<3>() = log_map(p.orientation);
  return row;
}

}  // namespace ddp
