#include "test_support.hpp"

#include "elastocal/error.hpp"

#include <gtest/gtest.h>

using namespace elastocal;
using namespace elastocal::testing;

namespace {

Vector6d pose_difference(const Pose& a, const Pose& b) {
  Vector6d d;
  d.head<3>() = a.position - b.position;
  d.tail<3>() = rotation_log(a.orientation * b.orientation.transpose());
  return d;
}

// Central differences of FK with respect to theta.
Matrix6Xd numeric_jacobian(const RobotModel& m, const JointVector& q, const JointVector& theta, double h) {
  Matrix6Xd J(6, q.size());
  for (Eigen::Index j = 0; j < q.size(); ++j) {
    JointVector tp = theta, tm = theta;
    tp[j] += h;
    tm[j] -= h;
    J.col(j) = pose_difference(forward_kinematics(m, q, tp).tool_pose, forward_kinematics(m, q, tm).tool_pose) /
               (2.0 * h);
  }
  return J;
}

}  // namespace

TEST(ForwardKinematics, Planar1RTip) {
  const RobotModel arm = planar_arm({1.0}, {1e-6});
  JointVector q(1);
  q << 0.0;
  EXPECT_TRUE(forward_kinematics(arm, q).tool_pose.position.isApprox(Eigen::Vector3d(1, 0, 0), 1e-15));
  q << kPi / 2;
  EXPECT_NEAR((forward_kinematics(arm, q).tool_pose.position - Eigen::Vector3d(0, 1, 0)).norm(), 0.0, 1e-15);
}

TEST(ForwardKinematics, MatchesExplicitTransformChain) {
  RobotModel m = heavy_6r_reference();
  m.base = make_transform({0.1, -0.2, 0.05}, {0.01, -0.02, 0.3});
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const JointVector q = random_q(m, rng);
    const Eigen::Matrix4d oracle = oracle_tool_matrix(m, q);
    const Pose p = forward_kinematics(m, q).tool_pose;
    EXPECT_LT((p.position - oracle.block<3, 1>(0, 3)).norm(), 1e-12);
    EXPECT_LT((p.orientation - oracle.block<3, 3>(0, 0)).norm(), 1e-12);
  }
}

TEST(ForwardKinematics, ReachMatchesHeavyArmScale) {
  const RobotModel m = heavy_6r_reference();
  const auto p = forward_kinematics(m, q6(0, 0, -kPi / 2, 0, 0, 0)).tool_pose.position;
  EXPECT_GT(p.head<2>().norm(), 2.3);
  EXPECT_LT(p.head<2>().norm(), 3.2);
}

TEST(ForwardKinematics, VirtualDeflectionShiftsJointAngles) {
  const RobotModel m = heavy_6r_reference();
  Rng rng(11);
  std::normal_distribution<double> small(0.0, 1e-3);
  for (int trial = 0; trial < 20; ++trial) {
    const JointVector q = random_q(m, rng);
    JointVector theta(6);
    for (auto& t : theta) t = small(rng);
    const auto a = forward_kinematics(m, q, theta);
    const auto b = forward_kinematics(m, q + theta);
    EXPECT_EQ(a.tool_pose.position, b.tool_pose.position);
    for (std::size_t k = 0; k < a.markers.size(); ++k) EXPECT_EQ(a.markers[k], b.markers[k]);
  }
}

TEST(ForwardKinematics, MarkersAreRigidlyAttached) {
  const RobotModel m = heavy_6r_reference();
  const auto reference = forward_kinematics(m, JointVector::Zero(6)).markers;
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto markers = forward_kinematics(m, random_q(m, rng)).markers;
    for (std::size_t a = 0; a < markers.size(); ++a) {
      for (std::size_t b = a + 1; b < markers.size(); ++b) {
        EXPECT_NEAR((markers[a] - markers[b]).norm(), (reference[a] - reference[b]).norm(), 1e-12);
      }
    }
  }
}

TEST(ForwardKinematics, JointLimitViolationNamesJoint) {
  const RobotModel m = heavy_6r_reference();
  JointVector q = JointVector::Zero(6);
  q[1] = 20 * kDeg;  // joint 2 upper limit is +10 deg
  try {
    forward_kinematics(m, q);
    FAIL() << "expected a joint-limit error";
  } catch (const JointLimitError& e) {
    EXPECT_EQ(e.joint_index(), 1u);
    EXPECT_EQ(e.category(), ErrorCategory::joint_limit);
  }
}

TEST(Jacobian, Planar1RColumn) {
  const double l = 0.7;
  const RobotModel arm = planar_arm({l}, {1e-6});
  const Matrix6Xd J = jacobian_virtual(arm, JointVector::Zero(1));
  EXPECT_NEAR((J.col(0).head<3>() - Eigen::Vector3d(0, l, 0)).norm(), 0.0, 1e-15);
  EXPECT_NEAR((J.col(0).tail<3>() - Eigen::Vector3d(0, 0, 1)).norm(), 0.0, 1e-15);
}

TEST(Jacobian, MatchesFiniteDifferencesAtRandomStates) {
  const RobotModel m = heavy_6r_reference();
  Rng rng(2024);
  std::normal_distribution<double> small(0.0, 1e-3);
  for (int trial = 0; trial < 100; ++trial) {
    const JointVector q = random_q(m, rng);
    JointVector theta(6);
    for (auto& t : theta) t = small(rng);
    const Matrix6Xd J = jacobian_virtual(m, q, theta);
    const Matrix6Xd Jn = numeric_jacobian(m, q, theta, 1e-6);
    EXPECT_LT((J - Jn).norm() / J.norm(), 1e-6) << "trial " << trial;
  }
}

TEST(Jacobian, ZeroLengthLinkColumnComesFromRotationOnly) {
  // Joints 4..6 of the reference arm have a = 0; the wrist-joint column must
  // still match the FK perturbation.
  const RobotModel m = heavy_6r_reference();
  const JointVector q = q6(0.3, -0.8, 0.4, 0.2, 0.6, -0.1);
  const Matrix6Xd J = jacobian_virtual(m, q);
  const Matrix6Xd Jn = numeric_jacobian(m, q, JointVector::Zero(6), 1e-6);
  for (int j = 3; j < 6; ++j) EXPECT_LT((J.col(j) - Jn.col(j)).norm(), 1e-8);
}

TEST(Jacobian, PointJacobianMatchesMarkerPerturbation) {
  const RobotModel m = heavy_6r_reference();
  const JointVector q = q6(-0.2, -0.9, 0.5, 0.4, -0.7, 0.3);
  const auto kin = forward_kinematics(m, q);
  for (std::size_t k = 0; k < kin.markers.size(); ++k) {
    const Eigen::Matrix3Xd Jp = point_jacobian(m, q, JointVector::Zero(6), m.marker_offsets[k]);
    for (Eigen::Index j = 0; j < 6; ++j) {
      JointVector tp = JointVector::Zero(6), tm = JointVector::Zero(6);
      tp[j] = 1e-6;
      tm[j] = -1e-6;
      const Eigen::Vector3d fd =
          (forward_kinematics(m, q, tp).markers[k] - forward_kinematics(m, q, tm).markers[k]) / 2e-6;
      EXPECT_LT((Jp.col(j) - fd).norm(), 1e-8);
    }
  }
}

TEST(LoadHessian, VanishesWithoutLoad) {
  const RobotModel m = heavy_6r_reference();
  const Eigen::MatrixXd H = hessian_load(m, q6(0.1, -0.5, 0.3, 0.2, 0.4, 0.0), JointVector::Zero(6), Wrench{});
  EXPECT_EQ(H.norm(), 0.0);
}

TEST(LoadHessian, Planar1RMatchesPotentialSecondDifference) {
  // Potential of a constant force f on the tip: V(theta) = f . p(theta).
  const double l = 1.3;
  const RobotModel arm = planar_arm({l}, {1e-6});
  const Wrench F{{0.0, 250.0, 0.0}, Eigen::Vector3d::Zero()};
  JointVector q(1);
  q << 0.4;
  const double h = 1e-4;
  auto V = [&](double t) {
    JointVector th(1);
    th << t;
    return F.force.dot(forward_kinematics(arm, q, th).tool_pose.position);
  };
  const double second = (V(h) - 2.0 * V(0.0) + V(-h)) / (h * h);
  const Eigen::MatrixXd H = hessian_load(arm, q, JointVector::Zero(1), F);
  EXPECT_NEAR(H(0, 0), second, 1e-5 * std::abs(second));
  EXPECT_NEAR(H(0, 0), -250.0 * l * std::sin(0.4), 1e-6);
}

TEST(LoadHessian, SymmetricForRandomInputs) {
  const RobotModel m = heavy_6r_reference();
  Rng rng(5);
  std::normal_distribution<double> n(0.0, 1000.0);
  for (int trial = 0; trial < 10; ++trial) {
    const Wrench F{{n(rng), n(rng), n(rng)}, {n(rng) * 0.1, n(rng) * 0.1, n(rng) * 0.1}};
    const Eigen::MatrixXd H = hessian_load(m, random_q(m, rng), JointVector::Zero(6), F);
    EXPECT_EQ((H - H.transpose()).norm(), 0.0);
  }
}

TEST(RobotModelValidation, RejectsNegativeLinkLength) {
  RobotModel m = heavy_6r_reference();
  m.links[1].a = -0.1;
  try {
    m.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::validation);
    EXPECT_NE(std::string(e.what()).find("link.2.a"), std::string::npos);
  }
}

TEST(RobotModelValidation, RejectsNonPositiveCompliance) {
  RobotModel m = heavy_6r_reference();
  m.compliances[3] = 0.0;
  EXPECT_THROW(m.validate(), Error);
}

TEST(RobotModelValidation, RejectsCollinearMarkers) {
  RobotModel m = heavy_6r_reference();
  m.marker_offsets = {{0, 0, 0}, {0.1, 0, 0}, {0.3, 0, 0}};
  EXPECT_THROW(m.validate(), Error);
}

TEST(Transforms, RpyRoundTrip) {
  const Eigen::Vector3d rpy(0.3, -0.7, 2.1);
  const Eigen::Isometry3d T = make_transform({1, 2, 3}, rpy);
  EXPECT_LT((rpy_of(T.linear()) - rpy).norm(), 1e-14);
  EXPECT_NEAR(T.linear().determinant(), 1.0, 1e-14);
}

TEST(Transforms, RigidRegistrationRecoversKnownMotion) {
  const Eigen::Isometry3d T = make_transform({0.4, -0.1, 0.2}, {0.2, 0.1, -0.5});
  std::vector<Eigen::Vector3d> src = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0.3, 0.4, 1.0}};
  std::vector<Eigen::Vector3d> dst;
  for (const auto& p : src) dst.push_back(T * p);
  const Eigen::Isometry3d R = rigid_registration(src, dst);
  EXPECT_LT((R.matrix() - T.matrix()).norm(), 1e-12);
  EXPECT_NEAR(R.linear().determinant(), 1.0, 1e-12);
}

TEST(Transforms, RigidRegistrationRejectsCollinearPoints) {
  std::vector<Eigen::Vector3d> src = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  EXPECT_THROW(rigid_registration(src, src), Error);
}

TEST(Transforms, RotationLogOfSmallRotation) {
  const Eigen::Vector3d w(1e-4, -2e-4, 3e-4);
  const Eigen::Matrix3d R = Eigen::AngleAxisd(w.norm(), w.normalized()).toRotationMatrix();
  EXPECT_LT((rotation_log(R) - w).norm(), 1e-15);
}

TEST(Conditioning, WristSingularityDetected) {
  const RobotModel m = heavy_6r_reference();
  // q5 = 0 aligns the axes of joints 4 and 6.
  EXPECT_LT(jacobian_conditioning(jacobian_virtual(m, q6(0.2, -0.6, 0.3, 0.1, 0.0, 0.2))), 1e-10);
  EXPECT_GT(jacobian_conditioning(jacobian_virtual(m, q6(0.2, -0.6, 0.3, 0.1, 0.8, 0.2))), 1e-3);
}
