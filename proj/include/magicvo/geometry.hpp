#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

// Rigid-body geometry for camera trajectories.
//
// Euler convention used everywhere in this project (network outputs, pose
// CSVs, checkpoint semantics): angles are (roll, pitch, yaw) in radians about
// the x, y and z axes, composed as R = Rz(yaw) * Ry(pitch) * Rx(roll).
// Poses are camera-to-world in the KITTI camera frame (x right, y down,
// z forward).
namespace magicvo::geometry {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct Pose6DoF {
  Vec3 translation = Vec3::Zero();  // meters
  Vec3 euler = Vec3::Zero();        // roll, pitch, yaw (radians)
};

struct SE3 {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static SE3 identity() { return {}; }
  SE3 inverse() const;
  SE3 operator*(const SE3& rhs) const;
  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }
};

struct Trajectory {
  std::vector<SE3> poses;
  std::vector<double> timestamps;  // optional, empty when unknown

  std::size_t size() const { return poses.size(); }
};

Mat3 euler_to_rotation(const Vec3& euler);

/// Inverse of euler_to_rotation. At gimbal lock (|pitch| = pi/2) roll is set
/// to 0 and the remaining rotation is attributed to yaw. Throws ContractError
/// if R is not orthonormal within 1e-6.
Vec3 rotation_to_euler(const Mat3& rotation);

SE3 to_se3(const Pose6DoF& pose);
Pose6DoF to_pose(const SE3& transform);

/// Transform taking frame-b coordinates into frame a, i.e. b = a * rel.
Pose6DoF relative_pose(const SE3& a, const SE3& b);

/// Chains relatives starting from the identity. Rotations are re-projected
/// onto SO(3) every `reorthonormalize_every` compositions.
Trajectory compose_trajectory(const std::vector<Pose6DoF>& relatives,
                              std::size_t reorthonormalize_every = 100);

/// Relative poses between consecutive trajectory entries.
std::vector<Pose6DoF> decompose_trajectory(const Trajectory& trajectory);

/// Closest rotation matrix in the Frobenius sense.
Mat3 nearest_rotation(const Mat3& m);
/// max(|R^T R - I|_max, |det R - 1|).
double orthonormality_error(const Mat3& rotation);
/// Rotation angle in radians, in [0, pi].
double rotation_angle(const Mat3& rotation);

}  // namespace magicvo::geometry
