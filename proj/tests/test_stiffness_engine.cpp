#include "test_support.hpp"

#include "elastocal/error.hpp"

#include <gtest/gtest.h>

using namespace elastocal;
using namespace elastocal::testing;

namespace {

CompensatorGeometry table_geometry(SpringConvention c = SpringConvention::plus) {
  return {0.18472, 0.68593, 0.12330, c};
}

// Spring length from the point positions: P1 on the crank circle, P0 at the
// pivot. Under `plus` the vector P0 -> P2 is (a_x, a_y), under `minus` P2 -> P0.
double geometric_spring_length(const CompensatorGeometry& g, double q2) {
  const Eigen::Vector2d p1(g.L * std::cos(q2), g.L * std::sin(q2));
  const Eigen::Vector2d offset(g.a_x, g.a_y);
  const Eigen::Vector2d p0 = g.convention == SpringConvention::plus ? Eigen::Vector2d(-offset) : offset;
  return (p1 - p0).norm();
}

// Equivalent joint stiffness from the spring potential V = Kc (s - s0)^2 / 2.
double potential_stiffness(const CompensatorModel& c, double q2) {
  const double h = 1e-4;
  auto V = [&](double q) {
    const double s = geometric_spring_length(c.geometry, q);
    return 0.5 * c.K_c * (s - c.s_0) * (s - c.s_0);
  };
  return c.K_theta2_0 + (V(q2 + h) - 2.0 * V(q2) + V(q2 - h)) / (h * h);
}

ElastoModel reference_model() { return {heavy_6r_reference(), reference_compensator()}; }

}  // namespace

TEST(SpringLength, DegeneratePivotAtAxis) {
  CompensatorGeometry g{0.2, 0.0, 0.0, SpringConvention::plus};
  // a = 0 is rejected by validation but the formula itself still applies.
  for (double q : {0.0, -1.0, 2.0}) EXPECT_NEAR(spring_length(g, q), 0.2, 1e-15);
}

TEST(SpringLength, QuarterTurnFromAlpha) {
  const auto g = table_geometry();
  const double q2 = g.alpha() - kPi / 2;
  EXPECT_NEAR(spring_length(g, q2), std::hypot(g.a(), g.L), 1e-15);
}

TEST(SpringLength, TableGeometryAtZero) {
  EXPECT_NEAR(spring_length(table_geometry(), 0.0), 0.8793, 5e-5);
}

TEST(SpringLength, MatchesPointGeometryBothConventions) {
  for (auto conv : {SpringConvention::plus, SpringConvention::minus}) {
    const auto g = table_geometry(conv);
    for (double q = -150 * kDeg; q <= 10 * kDeg; q += 5 * kDeg) {
      EXPECT_NEAR(spring_length(g, q), geometric_spring_length(g, q), 1e-14);
    }
  }
}

TEST(SpringLength, EvenAboutAlpha) {
  const auto g = table_geometry();
  for (double d : {0.1, 0.5, 1.3}) {
    EXPECT_NEAR(spring_length(g, g.alpha() + d), spring_length(g, g.alpha() - d), 1e-15);
  }
}

TEST(SpringLength, NegativeRadicandIsModelInconsistency) {
  // a = L under `minus` collapses the spring at q2 = alpha.
  CompensatorGeometry g{0.3, 0.3, 0.0, SpringConvention::minus};
  try {
    spring_length(g, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::model_inconsistency);
  }
}

TEST(Joint2Stiffness, NoSpringGivesIntrinsicStiffness) {
  CompensatorModel c = reference_compensator();
  c.K_c = 0.0;
  for (double q : geometry_sweep_q2()) EXPECT_EQ(joint2_equivalent_stiffness(c, q), c.K_theta2_0);
}

TEST(Joint2Stiffness, UnloadedLengthSimplification) {
  CompensatorModel c = reference_compensator();
  const double q2 = -40 * kDeg;
  c.s_0 = spring_length(c.geometry, q2);
  const double aL = c.geometry.a() * c.geometry.L;
  const double sn = std::sin(c.geometry.alpha() - q2);
  EXPECT_NEAR(joint2_equivalent_stiffness(c, q2), c.K_theta2_0 + c.K_c * aL * aL * sn * sn / (c.s_0 * c.s_0),
              1e-6);
}

TEST(Joint2Stiffness, MatchesSpringPotentialOverSweep) {
  for (auto conv : {SpringConvention::plus, SpringConvention::minus}) {
    CompensatorModel c = reference_compensator();
    c.geometry.convention = conv;
    for (double q : geometry_sweep_q2()) {
      const double expected = potential_stiffness(c, q);
      EXPECT_NEAR(joint2_equivalent_stiffness(c, q), expected, 1e-6 * std::abs(expected)) << q;
    }
  }
}

TEST(JointStiffness, InverseCompliancesWithoutSpring) {
  ElastoModel m = reference_model();
  m.compensator->K_c = 0.0;
  m.compensator->K_theta2_0 = 1.0 / m.robot.compliances[1];
  const Eigen::VectorXd K = joint_stiffness_matrix(m, q6(0.1, -0.7, 0.2, 0, 0.5, 0));
  EXPECT_LT((K - m.robot.compliances.cwiseInverse()).norm(), 1e-9 * K.norm());
}

TEST(JointStiffness, TableComplianceEntries) {
  const ElastoModel m{heavy_6r_reference(), std::nullopt};
  const Eigen::VectorXd K = joint_stiffness_matrix(m, JointVector::Zero(6));
  const double table[6] = {0.623, 0.500, 0.416, 2.786, 3.483, 2.074};
  for (int j = 0; j < 6; ++j) EXPECT_NEAR(K[j], 1.0 / (table[j] * 1e-6), 1e-6 * K[j]);
}

TEST(JointStiffness, OnlyCompensatedEntryVariesWithPose) {
  const ElastoModel m = reference_model();
  const Eigen::VectorXd a = joint_stiffness_matrix(m, q6(0.0, -0.3, 0, 0, 0, 0));
  const Eigen::VectorXd b = joint_stiffness_matrix(m, q6(1.0, -1.2, 0.5, 0.3, 0.2, 1.0));
  for (int j = 0; j < 6; ++j) {
    if (j == 1) {
      EXPECT_NE(a[j], b[j]);
    } else {
      EXPECT_EQ(a[j], b[j]);
    }
  }
}

TEST(CartesianStiffness, Planar1RTangentialStiffness) {
  const double l = 0.9, K = 4.0e5;
  const ElastoModel m{planar_arm({l}, {1.0 / K}), std::nullopt};
  const CartesianStiffness cs = cartesian_stiffness(m, JointVector::Zero(1), Wrench{}, LoadHessian::off);
  const Eigen::Vector3d tangent(0, 1, 0);
  const Eigen::Vector3d compliance_along = cs.compliance.topLeftCorner<3, 3>() * tangent;
  EXPECT_NEAR(1.0 / tangent.dot(compliance_along), K / (l * l), 1e-9 * K / (l * l));
  EXPECT_NEAR(tangent.dot(cs.translational() * tangent), K / (l * l), 1e-6 * K / (l * l));
}

TEST(CartesianStiffness, SymmetricPositiveDefiniteWithoutHessian) {
  const ElastoModel m = reference_model();
  Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const JointVector q = random_regular_q(m.robot, rng);
    const Matrix6d K = cartesian_stiffness(m, q, Wrench{}, LoadHessian::off).stiffness;
    EXPECT_LT((K - K.transpose()).norm(), 1e-10 * K.norm());
    const Eigen::SelfAdjointEigenSolver<Matrix6d> eig(0.5 * (K + K.transpose()));
    EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(CartesianStiffness, HessianEffectIsFirstOrderInLoad) {
  const ElastoModel m = reference_model();
  const JointVector q = q6(0.2, -0.6, 0.4, 0.3, 0.7, -0.2);
  const Wrench F{{800.0, -400.0, -1200.0}, Eigen::Vector3d::Zero()};
  const Matrix6d K0 = cartesian_stiffness(m, q, Wrench{}, LoadHessian::on).stiffness;
  const double d1 = (cartesian_stiffness(m, q, F, LoadHessian::on).stiffness - K0).norm();
  const double d2 = (cartesian_stiffness(m, q, 0.5 * F, LoadHessian::on).stiffness - K0).norm();
  EXPECT_GT(d1, 0.0);
  EXPECT_NEAR(d1 / d2, 2.0, 0.02);
}

TEST(CartesianStiffness, StiffnessTimesDeflectionReturnsWrench) {
  const ElastoModel m = reference_model();
  const JointVector q = q6(-0.3, -0.9, 0.6, 0.5, -0.8, 0.4);
  const Wrench F{{300.0, -1500.0, 700.0}, {20.0, -10.0, 40.0}};
  for (auto h : {LoadHessian::off, LoadHessian::on}) {
    const Vector6d dt = predict_deflection(m, q, F, h);
    const Vector6d back = cartesian_stiffness(m, q, F, h).stiffness * dt;
    EXPECT_LT((back - F.stacked()).norm(), 1e-9 * F.stacked().norm());
  }
}

TEST(Deflection, ZeroLoadNoDeflection) {
  EXPECT_EQ(predict_deflection(reference_model(), q6(0, -0.5, 0.2, 0, 0.5, 0), Wrench{}, LoadHessian::off).norm(),
            0.0);
}

TEST(Deflection, LinearInLoadWithoutHessian) {
  const ElastoModel m = reference_model();
  Rng rng(23);
  std::normal_distribution<double> n(0.0, 1000.0);
  for (int trial = 0; trial < 20; ++trial) {
    const JointVector q = random_regular_q(m.robot, rng);
    const Wrench F1{{n(rng), n(rng), n(rng)}, {n(rng) * 0.05, n(rng) * 0.05, n(rng) * 0.05}};
    const Wrench F2{{n(rng), n(rng), n(rng)}, Eigen::Vector3d::Zero()};
    const Vector6d d1 = predict_deflection(m, q, F1, LoadHessian::off);
    const Vector6d d2 = predict_deflection(m, q, F2, LoadHessian::off);
    const Vector6d sum = predict_deflection(m, q, Wrench{F1.force + F2.force, F1.torque + F2.torque}, LoadHessian::off);
    EXPECT_LT((sum - d1 - d2).norm(), 1e-12 * sum.norm());
    EXPECT_LT((predict_deflection(m, q, 2.0 * F1, LoadHessian::off) - 2.0 * d1).norm(), 1e-12 * d1.norm());
  }
}

TEST(Deflection, VirtualDeflectionIsComplianceTimesTorque) {
  const ElastoModel m = reference_model();
  const JointVector q = q6(0.4, -1.1, 0.7, -0.2, 0.9, 0.1);
  const Wrench F{{500.0, 200.0, -1500.0}, Eigen::Vector3d::Zero()};
  const Eigen::VectorXd tau = jacobian_virtual(m.robot, q).transpose() * F.stacked();
  Eigen::VectorXd expected = m.robot.compliances.cwiseProduct(tau);
  expected[1] = tau[1] / joint2_equivalent_stiffness(*m.compensator, q[1]);
  EXPECT_LT((virtual_joint_deflection(m, q, F, LoadHessian::off) - expected).norm(), 1e-15);
}

TEST(Deflection, MillimetreScaleAtOutstretchedPose) {
  const ElastoModel m = reference_model();
  const Wrench F{{0, 0, -1500.0}, Eigen::Vector3d::Zero()};
  const double d = predict_deflection(m, q6(0, -10 * kDeg, -80 * kDeg, 0, 30 * kDeg, 0), F, LoadHessian::off)
                       .head<3>()
                       .norm();
  EXPECT_GT(d, 1e-3);
  EXPECT_LT(d, 2e-2);
}

TEST(Deflection, SingularPoseRejected) {
  const ElastoModel m = reference_model();
  try {
    predict_deflection(m, q6(0.2, -0.6, 0.3, 0.1, 0.0, 0.2), Wrench{{0, 0, -100}, Eigen::Vector3d::Zero()}, LoadHessian::off);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::singularity);
  }
}

TEST(ElastoModelValidation, CompensatorInvariants) {
  ElastoModel m = reference_model();
  m.compensator->s_0 = 0.0;
  EXPECT_THROW(m.validate(), Error);
  m = reference_model();
  m.compensator->K_c = -1.0;
  EXPECT_THROW(m.validate(), Error);
  EXPECT_NO_THROW(reference_model().validate());
}
