#include "elastocal/model_core.hpp"

#include "elastocal/error.hpp"

#include <cmath>
#include <string>

namespace elastocal {

Vector6d Wrench::stacked() const {
  Vector6d w;
  w << force, torque;
  return w;
}

Wrench Wrench::from_stacked(const Vector6d& w) { return {w.head<3>(), w.tail<3>()}; }

Eigen::Isometry3d Pose::isometry() const {
  Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
  T.linear() = orientation;
  T.translation() = position;
  return T;
}

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCategory::validation, what); }

bool is_rigid(const Eigen::Isometry3d& T) {
  const Eigen::Matrix3d R = T.linear();
  return T.matrix().allFinite() && (R.transpose() * R - Eigen::Matrix3d::Identity()).norm() < 1e-9 &&
         R.determinant() > 0.0;
}

Eigen::Isometry3d link_transform(const LinkRow& link, double angle) {
  Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
  T.rotate(Eigen::AngleAxisd(angle + link.offset, Eigen::Vector3d::UnitZ()));
  T.translate(Eigen::Vector3d(link.a, 0.0, link.d));
  T.rotate(Eigen::AngleAxisd(link.alpha, Eigen::Vector3d::UnitX()));
  return T;
}

struct ChainFrames {
  // Joint axis and a point on it for every joint, world frame.
  std::vector<Eigen::Vector3d> axes;
  std::vector<Eigen::Vector3d> origins;
  Eigen::Isometry3d flange = Eigen::Isometry3d::Identity();
  Eigen::Isometry3d tool = Eigen::Isometry3d::Identity();
};

ChainFrames chain_frames(const RobotModel& model, const JointVector& angles) {
  const std::size_t n = model.n_joints();
  ChainFrames frames;
  frames.axes.reserve(n);
  frames.origins.reserve(n);
  Eigen::Isometry3d T = model.base;
  for (std::size_t j = 0; j < n; ++j) {
    frames.axes.push_back(T.linear().col(2));
    frames.origins.push_back(T.translation());
    T = T * link_transform(model.links[j], angles[static_cast<Eigen::Index>(j)]);
  }
  frames.flange = T;
  frames.tool = T * model.tool;
  return frames;
}

JointVector deflected_angles(const RobotModel& model, const JointVector& q, const JointVector& theta) {
  const auto n = static_cast<Eigen::Index>(model.n_joints());
  if (q.size() != n || theta.size() != n) {
    throw Error(ErrorCategory::invalid_input,
                "joint vector size " + std::to_string(q.size()) + "/" + std::to_string(theta.size()) +
                    " does not match " + std::to_string(n) + " joints");
  }
  if (!theta.allFinite()) throw Error(ErrorCategory::invalid_input, "non-finite virtual deflection");
  model.check_limits(q);
  return q + theta;
}

Eigen::Matrix3Xd position_jacobian(const ChainFrames& frames, const Eigen::Vector3d& p) {
  const auto n = static_cast<Eigen::Index>(frames.axes.size());
  Eigen::Matrix3Xd J(3, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    J.col(j) = frames.axes[j].cross(p - frames.origins[j]);
  }
  return J;
}

}  // namespace

void RobotModel::validate() const {
  const std::size_t n = n_joints();
  if (n == 0) invalid("robot model has no joints");
  for (std::size_t j = 0; j < n; ++j) {
    const auto& l = links[j];
    const std::string tag = "link." + std::to_string(j + 1);
    if (!std::isfinite(l.a) || l.a < 0.0) invalid(tag + ".a must be finite and >= 0");
    if (!std::isfinite(l.d) || l.d < 0.0) invalid(tag + ".d must be finite and >= 0");
    if (!std::isfinite(l.alpha) || !std::isfinite(l.offset)) invalid(tag + " angles must be finite");
    if (!(l.q_min < l.q_max)) invalid(tag + " joint limits must satisfy q_min < q_max");
  }
  if (compliances.size() != static_cast<Eigen::Index>(n)) {
    invalid("compliance vector has " + std::to_string(compliances.size()) + " entries, expected " +
            std::to_string(n));
  }
  for (Eigen::Index j = 0; j < compliances.size(); ++j) {
    if (!(compliances[j] > 0.0) || !std::isfinite(compliances[j])) {
      invalid("compliance." + std::to_string(j + 1) + " must be > 0");
    }
  }
  if (!is_rigid(base)) invalid("base transform is not a proper rigid transform");
  if (!is_rigid(tool)) invalid("tool transform is not a proper rigid transform");
  for (const auto& m : marker_offsets) {
    if (!m.allFinite()) invalid("marker offset is not finite");
  }
  if (marker_offsets.size() >= 3) {
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& m : marker_offsets) mean += m;
    mean /= static_cast<double>(marker_offsets.size());
    Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
    for (const auto& m : marker_offsets) scatter += (m - mean) * (m - mean).transpose();
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(scatter);
    const auto s = svd.singularValues();
    if (!(s[1] > 1e-12 * std::max(s[0], 1e-300))) invalid("marker offsets are collinear");
  }
}

void RobotModel::check_limits(const JointVector& q) const {
  if (q.size() != static_cast<Eigen::Index>(n_joints())) {
    throw Error(ErrorCategory::invalid_input, "joint vector size " + std::to_string(q.size()) +
                                                  " does not match " + std::to_string(n_joints()) +
                                                  " joints");
  }
  for (std::size_t j = 0; j < n_joints(); ++j) {
    const double v = q[static_cast<Eigen::Index>(j)];
    if (!std::isfinite(v) || v < links[j].q_min || v > links[j].q_max) {
      throw JointLimitError(j, v, links[j].q_min, links[j].q_max);
    }
  }
}

KinematicsResult forward_kinematics(const RobotModel& model, const JointVector& q,
                                    const JointVector& theta) {
  const ChainFrames frames = chain_frames(model, deflected_angles(model, q, theta));
  KinematicsResult out;
  out.tool_pose.position = frames.tool.translation();
  out.tool_pose.orientation = frames.tool.linear();
  out.markers.reserve(model.marker_offsets.size());
  for (const auto& m : model.marker_offsets) out.markers.push_back(frames.tool * m);
  return out;
}

KinematicsResult forward_kinematics(const RobotModel& model, const JointVector& q) {
  return forward_kinematics(model, q, JointVector::Zero(q.size()));
}

Matrix6Xd jacobian_virtual(const RobotModel& model, const JointVector& q, const JointVector& theta) {
  const ChainFrames frames = chain_frames(model, deflected_angles(model, q, theta));
  const auto n = static_cast<Eigen::Index>(model.n_joints());
  Matrix6Xd J(6, n);
  J.topRows<3>() = position_jacobian(frames, frames.tool.translation());
  for (Eigen::Index j = 0; j < n; ++j) J.block<3, 1>(3, j) = frames.axes[j];
  return J;
}

Matrix6Xd jacobian_virtual(const RobotModel& model, const JointVector& q) {
  return jacobian_virtual(model, q, JointVector::Zero(q.size()));
}

Eigen::Matrix3Xd point_jacobian(const RobotModel& model, const JointVector& q,
                                const JointVector& theta, const Eigen::Vector3d& tool_point) {
  const ChainFrames frames = chain_frames(model, deflected_angles(model, q, theta));
  return position_jacobian(frames, frames.tool * tool_point);
}

Eigen::MatrixXd hessian_load(const RobotModel& model, const JointVector& q,
                             const JointVector& theta, const Wrench& F) {
  const auto n = static_cast<Eigen::Index>(model.n_joints());
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
  if (F.is_zero()) {
    model.check_limits(q);
    return H;
  }
  constexpr double step = 1e-6;
  const Vector6d w = F.stacked();
  for (Eigen::Index i = 0; i < n; ++i) {
    JointVector plus = theta, minus = theta;
    plus[i] += step;
    minus[i] -= step;
    const Eigen::VectorXd tau_plus = jacobian_virtual(model, q, plus).transpose() * w;
    const Eigen::VectorXd tau_minus = jacobian_virtual(model, q, minus).transpose() * w;
    H.row(i) = ((tau_plus - tau_minus) / (2.0 * step)).transpose();
  }
  return 0.5 * (H + H.transpose());
}

double jacobian_conditioning(const Matrix6Xd& J) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s[0] <= 0.0) return 0.0;
  return s[s.size() - 1] / s[0];
}

Eigen::Isometry3d make_transform(const Eigen::Vector3d& translation, const Eigen::Vector3d& rpy) {
  Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
  T.translation() = translation;
  T.linear() = (Eigen::AngleAxisd(rpy.z(), Eigen::Vector3d::UnitZ()) *
                Eigen::AngleAxisd(rpy.y(), Eigen::Vector3d::UnitY()) *
                Eigen::AngleAxisd(rpy.x(), Eigen::Vector3d::UnitX()))
                   .toRotationMatrix();
  return T;
}

Eigen::Vector3d rpy_of(const Eigen::Matrix3d& R) {
  const double pitch = std::atan2(-R(2, 0), std::hypot(R(0, 0), R(1, 0)));
  const double yaw = std::atan2(R(1, 0), R(0, 0));
  const double roll = std::atan2(R(2, 1), R(2, 2));
  return {roll, pitch, yaw};
}

Eigen::Vector3d rotation_log(const Eigen::Matrix3d& R) {
  const Eigen::AngleAxisd aa(R);
  return aa.angle() * aa.axis();
}

Eigen::Isometry3d rigid_registration(const std::vector<Eigen::Vector3d>& src,
                                     const std::vector<Eigen::Vector3d>& dst) {
  if (src.size() != dst.size() || src.size() < 3) {
    throw Error(ErrorCategory::degenerate_data, "rigid registration needs >= 3 matched points");
  }
  Eigen::Vector3d cs = Eigen::Vector3d::Zero(), cd = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= static_cast<double>(src.size());
  cd /= static_cast<double>(dst.size());
  Eigen::Matrix3d cross = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) cross += (src[i] - cs) * (dst[i] - cd).transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (!(svd.singularValues()[1] > 1e-14 * std::max(svd.singularValues()[0], 1e-300))) {
    throw Error(ErrorCategory::degenerate_data, "rigid registration points are collinear");
  }
  Eigen::Matrix3d V = svd.matrixV();
  if ((V * svd.matrixU().transpose()).determinant() < 0.0) V.col(2) *= -1.0;
  Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
  T.linear() = V * svd.matrixU().transpose();
  T.translation() = cd - T.linear() * cs;
  return T;
}

RobotModel heavy_6r_reference() {
  constexpr double pi = std::numbers::pi;
  constexpr double deg = pi / 180.0;
  RobotModel m;
  m.links = {
      {0.350, -pi / 2, 0.675, 0.0, -185 * deg, 185 * deg},
      {1.150, 0.0, 0.0, 0.0, -150 * deg, 10 * deg},
      {0.041, -pi / 2, 0.0, 0.0, -120 * deg, 150 * deg},
      {0.0, pi / 2, 1.200, 0.0, -350 * deg, 350 * deg},
      {0.0, -pi / 2, 0.0, 0.0, -125 * deg, 125 * deg},
      {0.0, 0.0, 0.215, 0.0, -350 * deg, 350 * deg},
  };
  m.tool = make_transform({0.0, 0.0, 0.250}, Eigen::Vector3d::Zero());
  m.marker_offsets = {
      {0.120, 0.000, -0.100},
      {-0.060, 0.100, -0.100},
      {-0.060, -0.100, 0.000},
  };
  m.compliances.resize(6);
  m.compliances << 0.623e-6, 0.500e-6, 0.416e-6, 2.786e-6, 3.483e-6, 2.074e-6;
  return m;
}

}  // namespace elastocal
