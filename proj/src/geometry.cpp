#include "magicvo/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "magicvo/tensor.hpp"

namespace magicvo::geometry {

SE3 SE3::inverse() const {
  SE3 inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

SE3 SE3::operator*(const SE3& rhs) const {
  SE3 out;
  out.rotation = rotation * rhs.rotation;
  out.translation = rotation * rhs.translation + translation;
  return out;
}

Mat3 euler_to_rotation(const Vec3& euler) {
  const double cr = std::cos(euler.x()), sr = std::sin(euler.x());
  const double cp = std::cos(euler.y()), sp = std::sin(euler.y());
  const double cy = std::cos(euler.z()), sy = std::sin(euler.z());
  Mat3 r;
  r << cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr,
       sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr,
       -sp,     cp * sr,                cp * cr;
  return r;
}

double orthonormality_error(const Mat3& rotation) {
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  return std::max(ortho, std::abs(rotation.determinant() - 1.0));
}

Vec3 rotation_to_euler(const Mat3& r) {
  const double err = orthonormality_error(r);
  if (!(err <= 1e-6)) {
    throw ContractError("rotation_to_euler: matrix is not orthonormal (error " +
                        std::to_string(err) + ")");
  }
  const double s = std::clamp(-r(2, 0), -1.0, 1.0);
  const double pitch = std::asin(s);
  // cos(pitch) from the first column; below this the roll/yaw split is
  // numerically meaningless.
  const double cos_pitch = std::hypot(r(0, 0), r(1, 0));
  if (cos_pitch < 1e-12) {
    return {0.0, pitch, std::atan2(-r(0, 1), r(1, 1))};
  }
  return {std::atan2(r(2, 1), r(2, 2)), pitch, std::atan2(r(1, 0), r(0, 0))};
}

SE3 to_se3(const Pose6DoF& pose) {
  return {euler_to_rotation(pose.euler), pose.translation};
}

Pose6DoF to_pose(const SE3& transform) {
  return {transform.translation, rotation_to_euler(transform.rotation)};
}

Pose6DoF relative_pose(const SE3& a, const SE3& b) {
  const Mat3 rot_at = a.rotation.transpose();
  return {rot_at * (b.translation - a.translation), rotation_to_euler(rot_at * b.rotation)};
}

Mat3 nearest_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0) u.col(2) *= -1.0;
  return u * v.transpose();
}

Trajectory compose_trajectory(const std::vector<Pose6DoF>& relatives,
                              std::size_t reorthonormalize_every) {
  Trajectory traj;
  traj.poses.reserve(relatives.size() + 1);
  traj.poses.push_back(SE3::identity());
  std::size_t since_fix = 0;
  for (const auto& rel : relatives) {
    SE3 next = traj.poses.back() * to_se3(rel);
    if (reorthonormalize_every > 0 && ++since_fix >= reorthonormalize_every) {
      next.rotation = nearest_rotation(next.rotation);
      since_fix = 0;
    }
    traj.poses.push_back(next);
  }
  return traj;
}

std::vector<Pose6DoF> decompose_trajectory(const Trajectory& trajectory) {
  std::vector<Pose6DoF> rel;
  for (std::size_t i = 1; i < trajectory.poses.size(); ++i) {
    rel.push_back(relative_pose(trajectory.poses[i - 1], trajectory.poses[i]));
  }
  return rel;
}

double rotation_angle(const Mat3& rotation) {
  // Same angle as acos((trace - 1) / 2) clamped to [-1, 1], but without the
  // loss of precision near zero.
  const Vec3 axial(rotation(2, 1) - rotation(1, 2), rotation(0, 2) - rotation(2, 0),
                   rotation(1, 0) - rotation(0, 1));
  return std::atan2(axial.norm() / 2.0, (rotation.trace() - 1.0) / 2.0);
}

}  // namespace magicvo::geometry
