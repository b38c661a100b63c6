#include "elastocal/compensation_pipeline.hpp"

#include "elastocal/error.hpp"

#include <algorithm>
#include <cmath>

namespace elastocal {

namespace {

Eigen::MatrixXd damped_pinv(const Matrix6Xd& J, double damping) {
  const Matrix6d JJt = J * J.transpose() + damping * damping * Matrix6d::Identity();
  return J.transpose() * JJt.ldlt().solve(Matrix6d::Identity());
}

Eigen::Matrix3d rotation_exp(const Eigen::Vector3d& w) {
  const double angle = w.norm();
  if (angle == 0.0) return Eigen::Matrix3d::Identity();
  return Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
}

}  // namespace

Eigen::Vector3d loaded_tool_position(const ElastoModel& model, const JointVector& q, const Wrench& F,
                                     LoadHessian hessian) {
  const Vector6d dt = predict_deflection(model, q, F, hessian);
  return forward_kinematics(model.robot, q).tool_pose.position + dt.head<3>();
}

CompensationResult compensated_target(const ElastoModel& model, const JointVector& q_target,
                                      const Wrench& F, const CompensationOptions& options) {
  if (!(options.trust_radius > 0.0)) {
    throw Error(ErrorCategory::invalid_input, "trust radius must be positive");
  }
  require_nonsingular(model.robot, q_target);
  CompensationResult out;
  out.desired = forward_kinematics(model.robot, q_target).tool_pose;
  out.deflection = predict_deflection(model, q_target, F, options.hessian);
  const double magnitude = out.deflection.head<3>().norm();
  if (magnitude > options.trust_radius) {
    out.deflection *= options.trust_radius / magnitude;
    out.clipped = true;
  }

  out.corrected_target.position = out.desired.position - out.deflection.head<3>();
  out.corrected_target.orientation =
      rotation_exp(-out.deflection.tail<3>()) * out.desired.orientation;

  const Matrix6Xd J = jacobian_virtual(model.robot, q_target);
  out.corrected_q = q_target - damped_pinv(J, options.damping) * out.deflection;

  // Newton-like refinement on the position reached under load.
  for (std::size_t it = 0; it < options.fixed_point_iterations && !out.clipped; ++it) {
    const Eigen::Vector3d error =
        out.desired.position - loaded_tool_position(model, out.corrected_q, F, options.hessian);
    const Matrix6Xd Jc = jacobian_virtual(model.robot, out.corrected_q);
    const Eigen::MatrixXd Jp = Jc.topRows<3>();
    const Eigen::Matrix3d JJt = Jp * Jp.transpose() + options.damping * options.damping * Eigen::Matrix3d::Identity();
    out.corrected_q += Jp.transpose() * JJt.ldlt().solve(error);
    out.iterations = it + 1;
    if (error.norm() < options.fixed_point_tolerance) break;
  }
  return out;
}

AccuracyReport summarize_residuals(std::vector<double> before, std::vector<double> after) {
  if (before.empty() || before.size() != after.size()) {
    throw Error(ErrorCategory::empty_dataset, "no paired residuals to summarize");
  }
  AccuracyReport r;
  double sb = 0.0, sa = 0.0, fraction = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    r.max_before = std::max(r.max_before, before[i]);
    r.max_after = std::max(r.max_after, after[i]);
    sb += before[i] * before[i];
    sa += after[i] * after[i];
    if (before[i] > 0.0) {
      fraction += 1.0 - after[i] / before[i];
      ++counted;
    }
  }
  const auto n = static_cast<double>(before.size());
  r.rms_before = std::sqrt(sb / n);
  r.rms_after = std::sqrt(sa / n);
  if (r.rms_after > 0.0) r.improvement_factor = r.rms_before / r.rms_after;
  r.compensated_fraction = counted > 0 ? 100.0 * fraction / static_cast<double>(counted)
                                       : (r.rms_after == 0.0 ? 100.0 : 0.0);
  r.residuals_before = std::move(before);
  r.residuals_after = std::move(after);
  return r;
}

AccuracyReport evaluate_accuracy(std::span<const LoadedMeasurement> validation,
                                 const ElastoModel& model, LoadHessian hessian) {
  if (validation.empty()) throw Error(ErrorCategory::empty_dataset, "validation dataset is empty");
  const std::size_t markers = model.robot.marker_offsets.size();
  const auto configs = average_repetitions(validation, markers);

  std::vector<double> before, after;
  double orient_sq = 0.0, orient_max = 0.0;
  std::size_t orient_n = 0;
  for (const auto& c : configs) {
    require_nonsingular(model.robot, c.q);
    const auto predicted = predict_marker_deflections(model, c.q, c.F, hessian);
    for (std::size_t j = 0; j < markers; ++j) {
      const Eigen::Vector3d measured = c.displacement(j);
      before.push_back(measured.norm());
      after.push_back((measured - predicted[j]).norm());
    }
    if (markers >= 3) {
      const Eigen::Isometry3d motion = rigid_registration(c.unloaded, c.loaded);
      const Eigen::Vector3d dphi_meas = rotation_log(motion.linear());
      const Eigen::Vector3d dphi_pred = predict_deflection(model, c.q, c.F, hessian).tail<3>();
      const double e = (dphi_meas - dphi_pred).norm();
      orient_sq += e * e;
      orient_max = std::max(orient_max, e);
      ++orient_n;
    }
  }
  AccuracyReport report = summarize_residuals(std::move(before), std::move(after));
  if (orient_n > 0) {
    report.orientation_rms = std::sqrt(orient_sq / static_cast<double>(orient_n));
    report.orientation_max = orient_max;
  }
  return report;
}

}  // namespace elastocal
