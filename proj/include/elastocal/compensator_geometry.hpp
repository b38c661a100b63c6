#pragma once

// Identification of the compensator geometry from marker traces recorded
// while joint 2 sweeps a set of angles:
//   * P1 (spring attachment on link 2) turns about the joint-2 axis P2; an
//     orthogonal Procrustes fit against the unit directions u(q2) gives L
//     together with the plane rotation and P2.
//   * Markers on the compensator body turn about the pivot P0; an algebraic
//     circle fit in the plane returns P0.

#include "elastocal/stiffness_engine.hpp"

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

namespace elastocal {

struct TraceSample {
  double q2 = 0.0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
};

struct MarkerTrace {
  std::string marker_id;
  std::vector<TraceSample> samples;
  // Nominal placement about the pivot, used for the balance check only.
  double radius = 0.0;
  double phase = 0.0;
};

struct LinkLengthFit {
  double L = 0.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  // P2, the centre of the P1 circle.
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double residual_rms = 0.0;
};

LinkLengthFit fit_link_length(const MarkerTrace& trace_p1);

struct PivotFit {
  Eigen::Vector3d p0 = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  // In-plane radial deviations from the fitted circles plus out-of-plane
  // deviations from the per-trace mean height.
  double residual_rms = 0.0;
};

PivotFit fit_pivot_point(std::span<const MarkerTrace> traces_p0);

struct BalanceResidual {
  double r_cos = 0.0;
  double r_sin = 0.0;

  double norm() const { return std::hypot(r_cos, r_sin); }
  bool balanced(double tolerance = 1e-6) const { return norm() <= tolerance; }
};

BalanceResidual marker_balance_residual(std::span<const MarkerTrace> traces);

struct GeometryFitResult {
  double L = 0.0;
  double a_x = 0.0;
  double a_y = 0.0;
  Eigen::Vector3d p0 = Eigen::Vector3d::Zero();
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d plane_normal = Eigen::Vector3d::UnitZ();
  double residual_rms = 0.0;
  // +/- 3 sigma half widths for (L, a_x, a_y), m.
  Eigen::Vector3d ci_half_widths = Eigen::Vector3d::Zero();

  CompensatorGeometry geometry(SpringConvention convention) const {
    return {L, a_x, a_y, convention};
  }
};

// Full geometry identification: L from the P1 trace, P0 from the body
// markers, and (a_x, a_y) read in the plane frame whose z axis is the fitted
// normal and whose x axis is the q2 = 0 direction of P1. Under the `plus`
// convention (a_x, a_y) is the vector P0 -> P2, under `minus` it is P2 -> P0.
GeometryFitResult identify_compensator_geometry(const MarkerTrace& trace_p1,
                                                std::span<const MarkerTrace> traces_p0,
                                                SpringConvention convention);

}  // namespace elastocal
