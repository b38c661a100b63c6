#include "elastocal/stiffness_engine.hpp"

#include "elastocal/error.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace elastocal {

namespace {

double cosine_sign(SpringConvention c) { return c == SpringConvention::plus ? 1.0 : -1.0; }

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& A, double relative_cutoff) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
  const double cutoff = s.size() > 0 ? relative_cutoff * s[0] : 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > cutoff) inv[i] = 1.0 / s[i];
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

double condition_number(const Eigen::MatrixXd& A) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
  const auto& s = svd.singularValues();
  const double smallest = s[s.size() - 1];
  return smallest > 0.0 ? s[0] / smallest : std::numeric_limits<double>::infinity();
}

// K - H for the requested load model, guarded against near-singularity.
Eigen::MatrixXd joint_stiffness_operator(const ElastoModel& model, const JointVector& q,
                                         const Wrench& F, LoadHessian hessian) {
  Eigen::MatrixXd M = joint_stiffness_matrix(model, q).asDiagonal();
  if (hessian == LoadHessian::on) {
    M -= hessian_load(model.robot, q, JointVector::Zero(q.size()), F);
    if (condition_number(M) > kConditionLimit) {
      throw Error(ErrorCategory::conditioning, "joint stiffness minus load Hessian is not invertible");
    }
  }
  return M;
}

}  // namespace

double CompensatorGeometry::a() const { return std::hypot(a_x, a_y); }

double CompensatorGeometry::alpha() const { return std::atan2(a_y, a_x); }

void CompensatorModel::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCategory::validation, what); };
  if (!(geometry.L > 0.0) || !std::isfinite(geometry.L)) fail("compensator L must be > 0");
  if (!(geometry.a() > 0.0) || !std::isfinite(geometry.a())) fail("compensator a must be > 0");
  if (!(K_c >= 0.0) || !std::isfinite(K_c)) fail("compensator K_c must be >= 0");
  if (!(s_0 > 0.0) || !std::isfinite(s_0)) fail("compensator s_0 must be > 0");
  if (!(K_theta2_0 > 0.0) || !std::isfinite(K_theta2_0)) fail("compensator K_theta2_0 must be > 0");
}

void ElastoModel::validate() const {
  robot.validate();
  if (compensator) {
    compensator->validate();
    if (compensator->joint >= robot.n_joints()) {
      throw Error(ErrorCategory::validation, "compensated joint index exceeds joint count");
    }
    // Spring length must stay positive over the whole joint range.
    const auto& link = robot.links[compensator->joint];
    for (int i = 0; i <= 64; ++i) {
      const double q2 = link.q_min + (link.q_max - link.q_min) * i / 64.0;
      spring_length(compensator->geometry, q2);
    }
  }
}

double spring_length(const CompensatorGeometry& g, double q2) {
  const double a = g.a();
  const double radicand =
      a * a + g.L * g.L + 2.0 * cosine_sign(g.convention) * a * g.L * std::cos(g.alpha() - q2);
  if (!(radicand > 0.0)) {
    throw Error(ErrorCategory::model_inconsistency,
                "spring length is not positive at q2 = " + std::to_string(q2));
  }
  return std::sqrt(radicand);
}

double joint2_equivalent_stiffness(const CompensatorModel& comp, double q2) {
  const auto& g = comp.geometry;
  const double s = spring_length(g, q2);
  const double aL = g.a() * g.L;
  const double c = cosine_sign(g.convention) * std::cos(g.alpha() - q2);
  const double sn = std::sin(g.alpha() - q2);
  return comp.K_theta2_0 + comp.K_c * aL * ((comp.s_0 / s) * (aL / (s * s) * sn * sn + c) - c);
}

Eigen::VectorXd joint_stiffness_matrix(const ElastoModel& model, const JointVector& q) {
  const auto& k = model.robot.compliances;
  if (q.size() != k.size()) {
    throw Error(ErrorCategory::invalid_input, "joint vector does not match compliance count");
  }
  Eigen::VectorXd K = k.cwiseInverse();
  if (model.compensator) {
    const auto j = static_cast<Eigen::Index>(model.compensator->joint);
    K[j] = joint2_equivalent_stiffness(*model.compensator, q[j]);
  }
  for (Eigen::Index i = 0; i < K.size(); ++i) {
    if (!(K[i] > 0.0) || !std::isfinite(K[i])) {
      throw Error(ErrorCategory::model_inconsistency,
                  "joint " + std::to_string(i + 1) + " stiffness is not positive");
    }
  }
  return K;
}

void require_nonsingular(const RobotModel& robot, const JointVector& q) {
  const Matrix6Xd J = jacobian_virtual(robot, q);
  if (jacobian_conditioning(J) < kSingularityRatio) {
    throw Error(ErrorCategory::singularity, "singular configuration: Jacobian lost rank");
  }
}

Eigen::Matrix3d CartesianStiffness::translational() const {
  return pseudo_inverse(compliance.topLeftCorner<3, 3>(), 1e-12);
}

CartesianStiffness cartesian_stiffness(const ElastoModel& model, const JointVector& q,
                                       const Wrench& F, LoadHessian hessian) {
  const Matrix6Xd J = jacobian_virtual(model.robot, q);
  if (jacobian_conditioning(J) < kSingularityRatio) {
    throw Error(ErrorCategory::singularity, "singular configuration: Jacobian lost rank");
  }
  const Eigen::MatrixXd M = joint_stiffness_operator(model, q, F, hessian);
  CartesianStiffness out;
  out.compliance = J * M.partialPivLu().solve(J.transpose());
  if (J.cols() >= 6) {
    if (condition_number(out.compliance) > kConditionLimit) {
      throw Error(ErrorCategory::conditioning, "Cartesian compliance is ill-conditioned");
    }
    out.stiffness = out.compliance.partialPivLu().inverse();
  } else {
    out.stiffness = pseudo_inverse(out.compliance, 1e-12);
  }
  return out;
}

JointVector virtual_joint_deflection(const ElastoModel& model, const JointVector& q,
                                     const Wrench& F, LoadHessian hessian) {
  require_nonsingular(model.robot, q);
  if (F.is_zero()) return JointVector::Zero(q.size());
  const Matrix6Xd J = jacobian_virtual(model.robot, q);
  const Eigen::MatrixXd M = joint_stiffness_operator(model, q, F, hessian);
  const Eigen::VectorXd tau = J.transpose() * F.stacked();
  if (hessian == LoadHessian::off) return tau.cwiseQuotient(M.diagonal());
  return M.partialPivLu().solve(tau);
}

Vector6d predict_deflection(const ElastoModel& model, const JointVector& q, const Wrench& F,
                            LoadHessian hessian) {
  const JointVector theta = virtual_joint_deflection(model, q, F, hessian);
  return jacobian_virtual(model.robot, q) * theta;
}

std::vector<Eigen::Vector3d> predict_marker_deflections(const ElastoModel& model,
                                                        const JointVector& q, const Wrench& F,
                                                        LoadHessian hessian) {
  const JointVector theta = virtual_joint_deflection(model, q, F, hessian);
  const JointVector zero = JointVector::Zero(q.size());
  std::vector<Eigen::Vector3d> out;
  out.reserve(model.robot.marker_offsets.size());
  for (const auto& m : model.robot.marker_offsets) {
    out.push_back(point_jacobian(model.robot, q, zero, m) * theta);
  }
  return out;
}

}  // namespace elastocal
