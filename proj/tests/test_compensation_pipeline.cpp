#include "test_support.hpp"

#include "elastocal/compensation_pipeline.hpp"
#include "elastocal/error.hpp"

#include <gtest/gtest.h>

using namespace elastocal;
using namespace elastocal::testing;

namespace {

const JointVector kPose = q6(0.2, -0.8, 0.6, 0.3, 0.9, -0.4);
const Wrench kLoad{{1200, -600, -900}, {20, 10, 0}};

ElastoModel true_elasto() { return reference_truth(false).true_model(); }

std::vector<LoadedMeasurement> validation_data(const GroundTruth& truth, double sigma, std::size_t count,
                                               double force = 1500.0) {
  std::vector<LoadedMeasurement> out;
  const auto entries = random_validation_entries(truth.true_model().robot, count, force, 31);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto reps = simulate_loaded_measurement(truth, entries[i].q, entries[i].F, {sigma, 8}, 3, i);
    out.insert(out.end(), reps.begin(), reps.end());
  }
  return out;
}

}  // namespace

TEST(CompensatedTarget, ZeroLoadIsIdentity) {
  const auto r = compensated_target(true_elasto(), kPose, Wrench{});
  EXPECT_EQ(r.deflection.norm(), 0.0);
  EXPECT_LT((r.corrected_target.position - r.desired.position).norm(), 1e-15);
  EXPECT_LT((r.corrected_target.orientation - r.desired.orientation).norm(), 1e-15);
  EXPECT_LT((r.corrected_q - kPose).norm(), 1e-15);
  EXPECT_FALSE(r.clipped);
}

TEST(CompensatedTarget, MirrorsPredictedDeflection) {
  const ElastoModel model = true_elasto();
  const auto r = compensated_target(model, kPose, kLoad);
  const Vector6d dt = predict_deflection(model, kPose, kLoad, LoadHessian::off);
  EXPECT_LT((r.deflection - dt).norm(), 1e-15);
  EXPECT_LT((r.corrected_target.position - (r.desired.position - dt.head<3>())).norm(), 1e-15);
  const Eigen::Matrix3d relative = r.corrected_target.orientation * r.desired.orientation.transpose();
  EXPECT_LT((rotation_log(relative) + dt.tail<3>()).norm(), 1e-12);
  EXPECT_LT((r.desired.position - forward_kinematics(model.robot, kPose).tool_pose.position).norm(), 1e-15);
}

TEST(CompensatedTarget, OneShotCorrectionIsSecondOrderAccurate) {
  const ElastoModel model = true_elasto();
  const auto r = compensated_target(model, kPose, kLoad);
  const double deflection = r.deflection.head<3>().norm();
  const double error = (loaded_tool_position(model, r.corrected_q, kLoad) - r.desired.position).norm();
  EXPECT_GT(deflection, 1e-3);
  EXPECT_LT(error, 0.05 * deflection);
}

TEST(CompensatedTarget, FixedPointClosesTheLoop) {
  const ElastoModel model = true_elasto();
  CompensationOptions opt;
  opt.fixed_point_iterations = 30;
  opt.fixed_point_tolerance = 1e-12;
  const auto r = compensated_target(model, kPose, kLoad, opt);
  EXPECT_GT(r.iterations, 0u);
  EXPECT_LT((loaded_tool_position(model, r.corrected_q, kLoad) - r.desired.position).norm(), 1e-9);
}

TEST(CompensatedTarget, LargeDeflectionIsClipped) {
  const ElastoModel model = true_elasto();
  const Wrench huge = 40.0 * kLoad;
  const auto r = compensated_target(model, kPose, huge);
  EXPECT_TRUE(r.clipped);
  EXPECT_LE((r.corrected_target.position - r.desired.position).norm(), 0.020 + 1e-12);
  CompensationOptions wide;
  wide.trust_radius = 1.0;
  EXPECT_FALSE(compensated_target(model, kPose, huge, wide).clipped);
}

TEST(CompensatedTarget, RejectsSingularTarget) {
  EXPECT_THROW(compensated_target(true_elasto(), q6(0.2, -0.8, 0.6, 0.3, 0.0, -0.4), kLoad), Error);
  CompensationOptions bad;
  bad.trust_radius = 0.0;
  EXPECT_THROW(compensated_target(true_elasto(), kPose, kLoad, bad), Error);
}

TEST(LoadedToolPosition, MatchesForwardModel) {
  const ElastoModel model = true_elasto();
  const Eigen::Vector3d p = loaded_tool_position(model, kPose, kLoad);
  const Vector6d dt = predict_deflection(model, kPose, kLoad, LoadHessian::off);
  EXPECT_LT((p - forward_kinematics(model.robot, kPose).tool_pose.position - dt.head<3>()).norm(), 1e-15);
}

TEST(SummarizeResiduals, HandComputedValues) {
  const auto r = summarize_residuals({3.0, 4.0}, {1.0, 2.0});
  EXPECT_DOUBLE_EQ(r.max_before, 4.0);
  EXPECT_DOUBLE_EQ(r.max_after, 2.0);
  EXPECT_NEAR(r.rms_before, std::sqrt(12.5), 1e-15);
  EXPECT_NEAR(r.rms_after, std::sqrt(2.5), 1e-15);
  EXPECT_NEAR(r.improvement_factor, std::sqrt(5.0), 1e-14);
  EXPECT_NEAR(r.compensated_fraction, 100.0 * (2.0 / 3.0 + 0.5) / 2.0, 1e-12);
}

TEST(SummarizeResiduals, Invariants) {
  Rng rng(3);
  std::uniform_real_distribution<double> u(0.0, 1e-2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> before, after;
    for (int i = 0; i < 20; ++i) {
      before.push_back(u(rng) + 1e-6);
      after.push_back(0.3 * u(rng));
    }
    const auto r = summarize_residuals(before, after);
    EXPECT_GE(r.max_before, r.rms_before);
    EXPECT_GE(r.max_after, r.rms_after);
    EXPECT_GE(r.rms_after, 0.0);
    EXPECT_DOUBLE_EQ(r.improvement_factor, r.rms_before / r.rms_after);
    EXPECT_LE(r.compensated_fraction, 100.0);
  }
}

TEST(SummarizeResiduals, PerfectCompensation) {
  const auto r = summarize_residuals({1e-3, 2e-3}, {0.0, 0.0});
  EXPECT_EQ(r.compensated_fraction, 100.0);
  EXPECT_TRUE(std::isinf(r.improvement_factor));
}

TEST(SummarizeResiduals, RejectsEmptyOrMismatched) {
  EXPECT_THROW(summarize_residuals({}, {}), Error);
  EXPECT_THROW(summarize_residuals({1.0, 2.0}, {1.0}), Error);
}

TEST(EvaluateAccuracy, PerfectModelOnNoiselessData) {
  const GroundTruth truth = reference_truth(true);
  const auto data = validation_data(truth, 0.0, 10);
  const auto r = evaluate_accuracy(data, truth.true_model());
  EXPECT_EQ(r.residuals_before.size(), 30u);
  EXPECT_GT(r.rms_before, 1e-4);
  EXPECT_LT(r.rms_after, 1e-12);
  EXPECT_NEAR(r.compensated_fraction, 100.0, 1e-7);
  // Linearized marker displacements are rigid only to first order in theta.
  EXPECT_LT(r.orientation_max, 1e-5);
}

TEST(EvaluateAccuracy, NominalRobotWithoutCompensatorLeavesResiduals) {
  const GroundTruth truth = reference_truth(true);
  const auto data = validation_data(truth, 0.0, 10);
  ElastoModel serial{truth.true_model().robot, std::nullopt};
  const auto r = evaluate_accuracy(data, serial);
  EXPECT_GT(r.rms_after, 1e-5);
  EXPECT_LT(r.compensated_fraction, 100.0);
}

TEST(EvaluateAccuracy, IdentifiedModelCompensatesMostDeflection) {
  const GroundTruth truth = reference_truth(true);
  const auto train = generate_calibration_dataset(reference_plan(7), truth, {3e-5, 21}, 3);
  const auto id = run_two_step_identification(train.measurements, truth.model.compensator->geometry,
                                              truth.model.robot);
  const auto r = evaluate_accuracy(validation_data(truth, 3e-5, 12), id.identified);
  EXPECT_GT(r.compensated_fraction, 80.0);
  EXPECT_GT(r.improvement_factor, 3.0);
}

TEST(EvaluateAccuracy, RejectsEmptyValidation) {
  EXPECT_THROW(evaluate_accuracy({}, true_elasto()), Error);
}
