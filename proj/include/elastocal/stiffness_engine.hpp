#pragma once

// Compensator-aware elastostatic model. The spring gravity compensator closes
// a loop between links 1 and 2, so joint 2 sees an equivalent stiffness that
// depends on q2; every other virtual spring keeps its nominal constant value.

#include "elastocal/model_core.hpp"

#include <cstddef>
#include <optional>
#include <vector>

namespace elastocal {

// Sign of the cosine term in s^2 = a^2 + L^2 +/- 2 a L cos(alpha - q2).
// `plus` is the reference form; `minus` is the law-of-cosines reading.
enum class SpringConvention { plus, minus };

struct CompensatorGeometry {
  double L = 0.0;    // |P1 P2|, m
  double a_x = 0.0;  // m
  double a_y = 0.0;  // m
  SpringConvention convention = SpringConvention::plus;

  double a() const;
  double alpha() const;
};

struct CompensatorModel {
  CompensatorGeometry geometry;
  double K_c = 0.0;         // spring stiffness, N/m
  double s_0 = 0.0;         // unloaded spring length, m
  double K_theta2_0 = 0.0;  // intrinsic stiffness of the compensated joint, N*m/rad
  std::size_t joint = 1;    // zero-based index of the compensated joint

  void validate() const;
};

// Serial chain plus an optional compensator on one joint.
struct ElastoModel {
  RobotModel robot;
  std::optional<CompensatorModel> compensator;

  void validate() const;
};

enum class LoadHessian { off, on };

double spring_length(const CompensatorGeometry& geometry, double q2);

// Equivalent stiffness of the compensated joint, N*m/rad.
double joint2_equivalent_stiffness(const CompensatorModel& comp, double q2);

// Diagonal joint stiffness K_theta(q): 1/k_i, with the compensated joint
// replaced by its equivalent stiffness.
Eigen::VectorXd joint_stiffness_matrix(const ElastoModel& model, const JointVector& q);

struct CartesianStiffness {
  // 6x6 stiffness at the tool point. For chains with fewer than six joints it
  // is the pseudo-inverse of the rank-deficient compliance.
  Matrix6d stiffness = Matrix6d::Zero();
  Matrix6d compliance = Matrix6d::Zero();

  // Translational stiffness with torques left free: inverse of the position
  // block of the compliance.
  Eigen::Matrix3d translational() const;
};

CartesianStiffness cartesian_stiffness(const ElastoModel& model, const JointVector& q,
                                       const Wrench& F, LoadHessian hessian);

// Virtual joint deflection theta = (K - H)^-1 J^T F.
JointVector virtual_joint_deflection(const ElastoModel& model, const JointVector& q,
                                     const Wrench& F, LoadHessian hessian);

// Tool deflection [dp; dphi] = J (K - H)^-1 J^T F.
Vector6d predict_deflection(const ElastoModel& model, const JointVector& q, const Wrench& F,
                            LoadHessian hessian);

// First-order displacement of every marker under the load F at the tool point.
std::vector<Eigen::Vector3d> predict_marker_deflections(const ElastoModel& model,
                                                        const JointVector& q, const Wrench& F,
                                                        LoadHessian hessian);

// Throws Error(singularity) when the Jacobian loses rank at q.
void require_nonsingular(const RobotModel& robot, const JointVector& q);

inline constexpr double kSingularityRatio = 1e-10;
inline constexpr double kConditionLimit = 1e12;

}  // namespace elastocal
