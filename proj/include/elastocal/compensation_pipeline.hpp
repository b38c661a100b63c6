#pragma once

// Off-line compliance error compensation: the controller is fed a target that
// mirrors the predicted deflection, so that the loaded arm lands on the
// desired one. Accuracy evaluation on held-out configurations.

#include "elastocal/elasto_ident.hpp"

#include <limits>
#include <span>
#include <vector>

namespace elastocal {

struct CompensationOptions {
  LoadHessian hessian = LoadHessian::off;
  double trust_radius = 0.020;  // m
  double damping = 1e-6;
  // 0 gives the one-shot linearized joint correction.
  std::size_t fixed_point_iterations = 0;
  double fixed_point_tolerance = 1e-7;  // m
};

struct CompensationResult {
  Pose desired;
  Vector6d deflection = Vector6d::Zero();  // [dp; dphi] used for the correction
  Pose corrected_target;
  JointVector corrected_q;
  bool clipped = false;  // predicted deflection exceeded the trust radius
  std::size_t iterations = 0;
};

CompensationResult compensated_target(const ElastoModel& model, const JointVector& q_target,
                                      const Wrench& F, const CompensationOptions& options = {});

// Tool position reached under load F when q is commanded (first-order deflection).
Eigen::Vector3d loaded_tool_position(const ElastoModel& model, const JointVector& q, const Wrench& F,
                                     LoadHessian hessian = LoadHessian::off);

struct AccuracyReport {
  std::vector<double> residuals_before;  // m, one per (configuration, marker)
  std::vector<double> residuals_after;
  double max_before = 0.0;
  double max_after = 0.0;
  double rms_before = 0.0;
  double rms_after = 0.0;
  double improvement_factor = std::numeric_limits<double>::infinity();
  double compensated_fraction = 100.0;  // %
  // Diagnostics only: rotation of the marker cluster against the prediction, rad.
  double orientation_rms = 0.0;
  double orientation_max = 0.0;
};

// Aggregates paired residuals; fraction is the mean of 1 - after/before in %.
AccuracyReport summarize_residuals(std::vector<double> before, std::vector<double> after);

AccuracyReport evaluate_accuracy(std::span<const LoadedMeasurement> validation,
                                 const ElastoModel& model, LoadHessian hessian = LoadHessian::off);

}  // namespace elastocal
