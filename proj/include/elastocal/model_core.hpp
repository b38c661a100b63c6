#pragma once

// Serial-chain geometry for the virtual joint model: forward kinematics of
// the tool and its reference markers, the Jacobian with respect to the
// virtual joint deflections, and the load-contracted Hessian.
//
// Conventions
//   * SI units throughout (m, rad, N, N*m, rad/(N*m)).
//   * Link rows follow the standard Denavit-Hartenberg convention
//       T_i = Rz(q_i + offset_i) * Tz(d_i) * Tx(a_i) * Rx(alpha_i)
//   * One virtual spring per actuated joint, coaxial with it, so the
//     deflected chain is the rigid chain evaluated at q + theta.
//   * Twists and wrenches are expressed in the world frame at the tool
//     point: [linear; angular] and [force; torque].

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cstddef>
#include <numbers>
#include <vector>

namespace elastocal {

using JointVector = Eigen::VectorXd;
using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;
using Matrix6Xd = Eigen::Matrix<double, 6, Eigen::Dynamic>;

struct Wrench {
  Eigen::Vector3d force = Eigen::Vector3d::Zero();
  Eigen::Vector3d torque = Eigen::Vector3d::Zero();

  Vector6d stacked() const;
  static Wrench from_stacked(const Vector6d& w);
  bool is_zero() const { return force.isZero(0.0) && torque.isZero(0.0); }
  bool finite() const { return force.allFinite() && torque.allFinite(); }

  friend Wrench operator*(double s, const Wrench& w) { return {s * w.force, s * w.torque}; }
};

struct Pose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Matrix3d orientation = Eigen::Matrix3d::Identity();

  Eigen::Isometry3d isometry() const;
};

struct LinkRow {
  double a = 0.0;
  double alpha = 0.0;
  double d = 0.0;
  double offset = 0.0;
  double q_min = -std::numbers::pi;
  double q_max = std::numbers::pi;
};

struct RobotModel {
  std::vector<LinkRow> links;
  Eigen::Isometry3d base = Eigen::Isometry3d::Identity();
  Eigen::Isometry3d tool = Eigen::Isometry3d::Identity();
  // Marker points rigidly attached to the tool, in tool frame.
  std::vector<Eigen::Vector3d> marker_offsets;
  // Nominal joint compliances k_i, rad/(N*m).
  Eigen::VectorXd compliances;

  std::size_t n_joints() const { return links.size(); }

  // Throws Error(validation) naming the first violated invariant.
  void validate() const;

  // Throws JointLimitError for the first joint outside its limits.
  void check_limits(const JointVector& q) const;
};

struct KinematicsResult {
  Pose tool_pose;
  std::vector<Eigen::Vector3d> markers;
};

KinematicsResult forward_kinematics(const RobotModel& model, const JointVector& q,
                                    const JointVector& theta);
KinematicsResult forward_kinematics(const RobotModel& model, const JointVector& q);

// 6 x n Jacobian of the tool twist with respect to the virtual deflections.
Matrix6Xd jacobian_virtual(const RobotModel& model, const JointVector& q, const JointVector& theta);
Matrix6Xd jacobian_virtual(const RobotModel& model, const JointVector& q);

// 3 x n Jacobian of the world position of a point fixed in the tool frame.
Eigen::Matrix3Xd point_jacobian(const RobotModel& model, const JointVector& q,
                                const JointVector& theta, const Eigen::Vector3d& tool_point);

// H[i][j] = d(J_j^T F)/d theta_i: central differences of the analytic
// Jacobian with step 1e-6 rad, symmetrized.
Eigen::MatrixXd hessian_load(const RobotModel& model, const JointVector& q,
                             const JointVector& theta, const Wrench& F);

// Smallest over largest singular value of the tool Jacobian.
double jacobian_conditioning(const Matrix6Xd& J);

// Rigid transform from translation and fixed-axis roll/pitch/yaw (applied x, then y, then z).
Eigen::Isometry3d make_transform(const Eigen::Vector3d& translation, const Eigen::Vector3d& rpy);
Eigen::Vector3d rpy_of(const Eigen::Matrix3d& R);

// Rotation vector (axis * angle) of a proper rotation.
Eigen::Vector3d rotation_log(const Eigen::Matrix3d& R);

// Least-squares rigid transform T minimizing sum |T*src_i - dst_i|^2.
Eigen::Isometry3d rigid_registration(const std::vector<Eigen::Vector3d>& src,
                                     const std::vector<Eigen::Vector3d>& dst);

// KUKA KR-270 class 6R arm, reach about 2.7 m, three markers on the spindle
// flange and the compliances of the heavy-arm reference model.
RobotModel heavy_6r_reference();

}  // namespace elastocal
