#pragma once

// Two-step elastostatic identification from partial pose (marker position)
// measurements.
//
// Step 0 registers base and tool transforms against the unloaded marker
// positions. Step 1 solves the linear least-squares problem dp = B k, where
// the compensated joint owns one compliance column per distinct q2 value.
// Step 2 regresses the intrinsic joint stiffness and the compensator spring
// parameters from those per-q2 compliances.
//
// Parameter vector ordering for a 6R arm with the compensator on joint 2:
//   [k1, k2(q2 group 1), ..., k2(q2 group m_q), k3, k4, k5, k6]
// with groups sorted by ascending q2.

#include "elastocal/stiffness_engine.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace elastocal {

struct LoadedMeasurement {
  std::size_t config_id = 0;
  std::size_t repetition = 0;
  JointVector q;
  Wrench F;
  std::vector<Eigen::Vector3d> markers_unloaded;
  std::vector<Eigen::Vector3d> markers_loaded;
};

// One configuration with marker positions averaged over its repetitions.
struct ConfigurationDeflection {
  std::size_t config_id = 0;
  JointVector q;
  Wrench F;
  std::vector<Eigen::Vector3d> unloaded;
  std::vector<Eigen::Vector3d> loaded;
  std::size_t repetitions = 0;

  Eigen::Vector3d displacement(std::size_t marker) const { return loaded[marker] - unloaded[marker]; }
};

// Groups measurements by config_id (ascending) and averages repetitions.
std::vector<ConfigurationDeflection> average_repetitions(std::span<const LoadedMeasurement> dataset,
                                                         std::size_t marker_count);

class ParameterLayout {
 public:
  ParameterLayout() = default;
  // Without a grouped joint every joint owns exactly one column.
  ParameterLayout(std::size_t n_joints, std::optional<std::size_t> grouped_joint,
                  std::span<const double> q2_values, double tolerance);

  std::size_t n_joints() const { return n_joints_; }
  std::optional<std::size_t> grouped_joint() const { return grouped_joint_; }
  std::size_t group_count() const { return grouped_joint_ ? group_q2_.size() : 1; }
  const std::vector<double>& group_q2() const { return group_q2_; }
  std::size_t size() const { return n_joints_ + group_count() - 1; }

  // Group index of a configuration; throws when q2 matches no group.
  std::size_t group_of(const JointVector& q) const;
  Eigen::Index column(std::size_t joint, std::size_t group) const;
  std::string parameter_name(Eigen::Index column) const;

  // 3 x n joint-space block -> 3 x size() block for the given group.
  Eigen::MatrixXd expand(const Eigen::Matrix3Xd& joint_block, std::size_t group) const;

 private:
  std::size_t n_joints_ = 0;
  std::optional<std::size_t> grouped_joint_;
  std::vector<double> group_q2_;
  double tolerance_ = 1e-6;
};

// Per-marker 3 x n blocks; column j is J_m,j (J_j^T F) with J_m the position
// Jacobian of the marker and J the tool Jacobian where F is applied.
std::vector<Eigen::Matrix3Xd> observation_matrix(const RobotModel& model, const JointVector& q,
                                                 const Wrench& F);

enum class IdentificationMode { compensator_aware, serial_only };

struct IdentificationOptions {
  IdentificationMode mode = IdentificationMode::compensator_aware;
  std::size_t compensated_joint = 1;
  double group_tolerance = 1e-6;
  double max_condition = 1e10;
  // Known variance of one averaged displacement coordinate, m^2. When unset
  // the variance is estimated from the least-squares residuals.
  std::optional<double> displacement_variance;
};

struct Joint2Group {
  double q2 = 0.0;
  double k2 = 0.0;
  double variance = 0.0;
};

struct ExtendedCompliances {
  ParameterLayout layout;
  Eigen::VectorXd k;
  Eigen::MatrixXd covariance;
  // Condition number of the column-equilibrated normal matrix.
  double condition_number = 0.0;
  double residual_rms = 0.0;
  std::size_t equations = 0;

  // n-vector of compliances; NaN for the grouped joint when it is grouped.
  Eigen::VectorXd joint_compliances() const;
  std::vector<Joint2Group> k2_groups() const;
  Eigen::MatrixXd k2_covariance() const;
};

ExtendedCompliances identify_extended_compliances(std::span<const LoadedMeasurement> dataset,
                                                  const RobotModel& model,
                                                  const IdentificationOptions& options = {});
ExtendedCompliances identify_extended_compliances(std::span<const ConfigurationDeflection> configs,
                                                  const RobotModel& model,
                                                  const IdentificationOptions& options = {});

struct Joint2Regression {
  double K_theta2_0 = 0.0;
  double K_c = 0.0;
  double s_0 = 0.0;  // NaN when the compensator is absent
  bool compensator_present = true;
  // Covariance of (K_theta2_0, K_c, s_0); the s_0 row/column is zero when absent.
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();
};

// k2_covariance (optional, m_q x m_q) propagates step-1 uncertainty; when
// empty the covariance is estimated from the regression residuals.
Joint2Regression regress_joint2_parameters(std::span<const Joint2Group> groups,
                                           const CompensatorGeometry& geometry,
                                           const Eigen::MatrixXd& k2_covariance = {});

struct RigidCorrections {
  // Estimated base = base_correction * nominal base;
  // estimated tool = nominal tool * tool_correction.
  Eigen::Isometry3d base_correction = Eigen::Isometry3d::Identity();
  Eigen::Isometry3d tool_correction = Eigen::Isometry3d::Identity();
  double residual_rms = 0.0;

  RobotModel apply(const RobotModel& nominal) const;
};

RigidCorrections register_base_tool(const RobotModel& nominal,
                                    std::span<const ConfigurationDeflection> configs);

struct TwoStepResult {
  RigidCorrections corrections;
  ExtendedCompliances step1;
  std::optional<Joint2Regression> step2;
  ElastoModel identified;
};

TwoStepResult run_two_step_identification(std::span<const LoadedMeasurement> dataset,
                                          const CompensatorGeometry& geometry,
                                          const RobotModel& nominal,
                                          const IdentificationOptions& options = {});

}  // namespace elastocal
