#pragma once

// Synthetic stand-in for the laser tracker: compensator marker traces and
// unloaded/loaded marker measurements generated from a ground-truth model.

#include "elastocal/compensator_geometry.hpp"
#include "elastocal/elasto_ident.hpp"
#include "elastocal/experiment_design.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace elastocal {

struct GroundTruth {
  // Nominal robot plus the true compensator and compliances.
  ElastoModel model;
  // True base = base_perturbation * nominal base; true tool = nominal tool * tool_perturbation.
  Eigen::Isometry3d base_perturbation = Eigen::Isometry3d::Identity();
  Eigen::Isometry3d tool_perturbation = Eigen::Isometry3d::Identity();
  // Pose of P2 in the tracker frame: z along the joint-2 axis, x along the
  // q2 = 0 direction of P2 -> P1.
  Eigen::Isometry3d compensator_frame = Eigen::Isometry3d::Identity();
  // `on` switches to model-mismatch data: nonlinear deflected geometry with
  // the load Hessian.
  LoadHessian deflection_model = LoadHessian::off;

  ElastoModel true_model() const;
  void validate() const;
};

struct NoiseSpec {
  double sigma_position = 3e-5;  // m, per axis
  std::uint64_t seed = 1;
};

struct MarkerPlacement {
  double radius = 0.0;
  double phase = 0.0;
  double axial_offset = 0.0;
};

// First trace is P1 ("P1"), followed by one trace per body marker ("P01", ...).
std::vector<MarkerTrace> simulate_compensator_markers(const GroundTruth& truth,
                                                      const std::vector<double>& q2_set,
                                                      const std::vector<MarkerPlacement>& markers,
                                                      const NoiseSpec& noise);

// One LoadedMeasurement per repetition, all tagged with config_id.
std::vector<LoadedMeasurement> simulate_loaded_measurement(const GroundTruth& truth,
                                                           const JointVector& q, const Wrench& F,
                                                           const NoiseSpec& noise,
                                                           std::size_t repetitions = 3,
                                                           std::size_t config_id = 0);

struct DatasetManifest {
  std::uint64_t seed = 0;
  double sigma_position = 0.0;
  std::size_t repetitions = 0;
  std::size_t entries = 0;
  std::size_t q2_groups = 0;
  std::string truth_hash;
};

struct CalibrationDataset {
  std::vector<LoadedMeasurement> measurements;
  DatasetManifest manifest;
};

CalibrationDataset generate_calibration_dataset(const ExperimentPlan& plan, const GroundTruth& truth,
                                                const NoiseSpec& noise, std::size_t repetitions = 3);

// Held-out configurations: joint angles uniform within the limits (rejecting
// poorly conditioned poses) and a load of the given magnitude along a random
// unit direction.
std::vector<PlanEntry> random_validation_entries(const RobotModel& robot, std::size_t count,
                                                 double force_magnitude, std::uint64_t seed,
                                                 double min_conditioning = 1e-3);

// 64-bit FNV-1a of the ground truth in canonical text form, as hex.
std::string truth_hash(const GroundTruth& truth);

// Ground-truth compensator used by the reference scenario: the identified
// geometry of the heavy-arm compensator with a chosen spring model.
CompensatorModel reference_compensator();

// The four body markers on opposite sides of the pivot:
// R1 = R3, R2 = R4, beta3 = pi + beta1, beta4 = pi + beta2.
std::vector<MarkerPlacement> balanced_marker_placement();

// The six joint-2 angles of the geometry sweep, rad.
std::vector<double> geometry_sweep_q2();

}  // namespace elastocal
