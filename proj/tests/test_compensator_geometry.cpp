#include "test_support.hpp"

#include "elastocal/compensator_geometry.hpp"
#include "elastocal/error.hpp"

#include <gtest/gtest.h>

using namespace elastocal;
using namespace elastocal::testing;

namespace {

MarkerTrace circle_trace(const Eigen::Vector3d& c, const Eigen::Matrix3d& R, double L,
                         const std::vector<double>& q2s) {
  MarkerTrace t;
  t.marker_id = "P1";
  for (double q : q2s) t.samples.push_back({q, c + L * R * Eigen::Vector3d(std::cos(q), std::sin(q), 0.0)});
  return t;
}

std::vector<MarkerTrace> noiseless_traces(const GroundTruth& truth) {
  return simulate_compensator_markers(truth, geometry_sweep_q2(), balanced_marker_placement(), {0.0, 1});
}

Eigen::Isometry3d some_motion() { return make_transform({0.7, -1.2, 0.4}, {0.3, -0.5, 1.1}); }

}  // namespace

TEST(LinkLength, IdentityPlacement) {
  const auto fit = fit_link_length(circle_trace(Eigen::Vector3d::Zero(), Eigen::Matrix3d::Identity(), 0.18472,
                                                geometry_sweep_q2()));
  EXPECT_NEAR(fit.L, 0.18472, 1e-15);
  EXPECT_LT((fit.rotation - Eigen::Matrix3d::Identity()).norm(), 1e-12);
}

TEST(LinkLength, RecoversSyntheticCircle) {
  const Eigen::Matrix3d R = make_transform({}, {0.4, -0.2, 0.9}).linear();
  const Eigen::Vector3d c(1.0, -2.0, 0.5);
  const auto fit = fit_link_length(circle_trace(c, R, 0.18472, geometry_sweep_q2()));
  EXPECT_NEAR(fit.L, 0.18472, 1e-9 * 0.18472);
  EXPECT_LT((fit.rotation - R).norm(), 1e-9);
  EXPECT_LT((fit.center - c).norm(), 1e-9);
}

TEST(LinkLength, InvariantUnderRigidMotion) {
  const auto truth = reference_truth(false);
  auto traces = simulate_compensator_markers(truth, geometry_sweep_q2(), {}, {5e-5, 9});
  const double L0 = fit_link_length(traces[0]).L;
  for (auto& s : traces[0].samples) s.position = some_motion() * s.position;
  EXPECT_NEAR(fit_link_length(traces[0]).L, L0, 1e-12 * L0);
}

TEST(LinkLength, RotationProperUnderNoise) {
  const auto truth = reference_truth(false);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto traces = simulate_compensator_markers(truth, geometry_sweep_q2(), {}, {5e-5, seed});
    const Eigen::Matrix3d R = fit_link_length(traces[0]).rotation;
    EXPECT_LT((R.transpose() * R - Eigen::Matrix3d::Identity()).norm(), 1e-12);
    EXPECT_NEAR(R.determinant(), 1.0, 1e-12);
  }
}

TEST(LinkLength, MirroredDataStillGivesProperRotation) {
  // Points traversed clockwise: the best orthogonal fit is a reflection.
  const Eigen::Matrix3d mirror = Eigen::Vector3d(1, -1, 1).asDiagonal();
  auto trace = circle_trace(Eigen::Vector3d::Zero(), mirror, 0.2, geometry_sweep_q2());
  const auto fit = fit_link_length(trace);
  EXPECT_NEAR(fit.rotation.determinant(), 1.0, 1e-12);
}

TEST(LinkLength, RejectsDegenerateSweeps) {
  auto equal = circle_trace(Eigen::Vector3d::Zero(), Eigen::Matrix3d::Identity(), 0.2, {0.1, 0.1, 0.1, 0.1});
  EXPECT_THROW(fit_link_length(equal), Error);
  auto narrow = circle_trace(Eigen::Vector3d::Zero(), Eigen::Matrix3d::Identity(), 0.2, {0.0, 0.1, 0.2});
  EXPECT_THROW(fit_link_length(narrow), Error);
  auto two = circle_trace(Eigen::Vector3d::Zero(), Eigen::Matrix3d::Identity(), 0.2, {0.0, -1.0});
  try {
    fit_link_length(two);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::degenerate_data);
  }
}

TEST(PivotPoint, SymmetricCircleAtOrigin) {
  MarkerTrace t;
  for (int i = 0; i < 6; ++i) {
    const double a = 0.5 * i;
    t.samples.push_back({-a, {0.2 * std::cos(a), 0.2 * std::sin(a), 0.0}});
  }
  const auto fit = fit_pivot_point(std::vector<MarkerTrace>{t});
  EXPECT_LT(fit.p0.norm(), 1e-12);
  EXPECT_NEAR(std::abs(fit.normal.z()), 1.0, 1e-12);
}

TEST(PivotPoint, BalancedMarkersAroundKnownCenter) {
  const Eigen::Vector3d c(0.3, -0.4, 1.1);
  const Eigen::Matrix3d R = make_transform({}, {0.2, 0.3, -0.6}).linear();
  std::vector<MarkerTrace> traces;
  for (const auto& m : balanced_marker_placement()) {
    MarkerTrace t;
    for (double phi = -0.3; phi < 0.3; phi += 0.1) {
      t.samples.push_back({phi, c + R * Eigen::Vector3d(m.radius * std::cos(m.phase + phi),
                                                         m.radius * std::sin(m.phase + phi), 0.05)});
    }
    traces.push_back(t);
  }
  const auto fit = fit_pivot_point(traces);
  // The axis component is the mean height of the markers (0.05 above c).
  EXPECT_LT((fit.p0 - (c + R * Eigen::Vector3d(0, 0, 0.05))).norm(), 1e-9);
  EXPECT_LT(fit.residual_rms, 1e-12);
}

TEST(PivotPoint, TranslationEquivariant) {
  const auto truth = reference_truth(false);
  auto traces = simulate_compensator_markers(truth, geometry_sweep_q2(), balanced_marker_placement(), {5e-5, 4});
  std::vector<MarkerTrace> body(traces.begin() + 1, traces.end());
  const Eigen::Vector3d p0 = fit_pivot_point(body).p0;
  const Eigen::Vector3d v(0.25, -1.5, 3.0);
  for (auto& t : body) {
    for (auto& s : t.samples) s.position += v;
  }
  EXPECT_LT((fit_pivot_point(body).p0 - (p0 + v)).norm(), 1e-9);
}

TEST(PivotPoint, CollinearSamplesRejected) {
  MarkerTrace t;
  for (int i = 0; i < 5; ++i) t.samples.push_back({-0.1 * i, {0.1 * i, 0.2 * i, 0.0}});
  try {
    fit_pivot_point(std::vector<MarkerTrace>{t});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::degenerate_data);
  }
}

TEST(Balance, SymmetricFourMarkerScheme) {
  std::vector<MarkerTrace> traces;
  for (const auto& m : balanced_marker_placement()) traces.push_back({"", {}, m.radius, m.phase});
  const auto r = marker_balance_residual(traces);
  EXPECT_TRUE(r.balanced());
  EXPECT_LT(r.norm(), 1e-15);
}

TEST(Balance, SingleMarker) {
  const auto r = marker_balance_residual(std::vector<MarkerTrace>{{"", {}, 0.1, 0.0}});
  EXPECT_DOUBLE_EQ(r.r_cos, 0.1);
  EXPECT_DOUBLE_EQ(r.r_sin, 0.0);
  EXPECT_FALSE(r.balanced());
}

TEST(Balance, ThreeMarkersAt120Degrees) {
  std::vector<MarkerTrace> traces;
  for (int i = 0; i < 3; ++i) traces.push_back({"", {}, 0.1, 0.4 + 2.0 * kPi * i / 3.0});
  EXPECT_LT(marker_balance_residual(traces).norm(), 1e-15);
}

TEST(GeometryIdentification, NoiselessRoundTrip) {
  for (auto conv : {SpringConvention::plus, SpringConvention::minus}) {
    GroundTruth truth = reference_truth(false);
    truth.model.compensator->geometry.convention = conv;
    const auto traces = noiseless_traces(truth);
    const auto fit = identify_compensator_geometry(traces[0], std::span(traces).subspan(1), conv);
    const auto& g = truth.model.compensator->geometry;
    EXPECT_NEAR(fit.L, g.L, 1e-9);
    EXPECT_NEAR(fit.a_x, g.a_x, 1e-9);
    EXPECT_NEAR(fit.a_y, g.a_y, 1e-9);
    EXPECT_NEAR(fit.plane_normal.norm(), 1.0, 1e-12);
  }
}

TEST(GeometryIdentification, InvariantUnderTrackerFrame) {
  GroundTruth truth = reference_truth(false);
  truth.compensator_frame = some_motion() * truth.compensator_frame;
  const auto traces = noiseless_traces(truth);
  const auto fit = identify_compensator_geometry(traces[0], std::span(traces).subspan(1), SpringConvention::plus);
  EXPECT_NEAR(fit.a_x, 0.68593, 1e-9);
  EXPECT_NEAR(fit.a_y, 0.12330, 1e-9);
}

TEST(GeometryIdentification, ConfidenceScalesWithNoise) {
  const auto truth = reference_truth(false);
  auto run = [&](double sigma) {
    const auto t = simulate_compensator_markers(truth, geometry_sweep_q2(), balanced_marker_placement(), {sigma, 31});
    return identify_compensator_geometry(t[0], std::span(t).subspan(1), SpringConvention::plus).ci_half_widths;
  };
  const Eigen::Vector3d a = run(2e-5), b = run(4e-5);
  for (int i = 0; i < 3; ++i) {
    EXPECT_GT(a[i], 0.0);
    EXPECT_NEAR(b[i] / a[i], 2.0, 0.02);
  }
}

TEST(GeometryIdentification, SingleAngleIsDegenerate) {
  const auto truth = reference_truth(false);
  const auto t = simulate_compensator_markers(truth, {-0.5}, balanced_marker_placement(), {0.0, 1});
  EXPECT_THROW(identify_compensator_geometry(t[0], std::span(t).subspan(1), SpringConvention::plus), Error);
}
