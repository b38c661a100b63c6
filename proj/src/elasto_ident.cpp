#include "elastocal/elasto_ident.hpp"

#include "elastocal/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

namespace elastocal {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Eigen::Isometry3d small_motion(const Eigen::Matrix<double, 6, 1>& xi) {
  Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
  const Eigen::Vector3d w = xi.head<3>();
  const double angle = w.norm();
  if (angle > 0.0) T.linear() = Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
  T.translation() = xi.tail<3>();
  return T;
}

Eigen::Isometry3d bare_chain(const RobotModel& nominal, const JointVector& q) {
  RobotModel bare = nominal;
  bare.base.setIdentity();
  bare.tool.setIdentity();
  bare.marker_offsets.clear();
  return forward_kinematics(bare, q).tool_pose.isometry();
}

}  // namespace

std::vector<ConfigurationDeflection> average_repetitions(std::span<const LoadedMeasurement> dataset,
                                                         std::size_t marker_count) {
  if (dataset.empty()) throw Error(ErrorCategory::empty_dataset, "measurement dataset is empty");
  std::map<std::size_t, ConfigurationDeflection> by_config;
  for (const auto& m : dataset) {
    if (m.markers_unloaded.size() != marker_count || m.markers_loaded.size() != marker_count) {
      throw Error(ErrorCategory::invalid_input,
                  "configuration " + std::to_string(m.config_id) + " has " +
                      std::to_string(m.markers_loaded.size()) + " markers, model declares " +
                      std::to_string(marker_count));
    }
    auto [it, inserted] = by_config.try_emplace(m.config_id);
    auto& c = it->second;
    if (inserted) {
      c.config_id = m.config_id;
      c.q = m.q;
      c.F = m.F;
      c.unloaded.assign(marker_count, Eigen::Vector3d::Zero());
      c.loaded.assign(marker_count, Eigen::Vector3d::Zero());
    } else if (c.q.size() != m.q.size() || (c.q - m.q).cwiseAbs().maxCoeff() > 1e-12 ||
               (c.F.stacked() - m.F.stacked()).cwiseAbs().maxCoeff() > 1e-9) {
      throw Error(ErrorCategory::invalid_input,
                  "repetitions of configuration " + std::to_string(m.config_id) + " disagree on q or F");
    }
    for (std::size_t j = 0; j < marker_count; ++j) {
      if (!m.markers_unloaded[j].allFinite() || !m.markers_loaded[j].allFinite()) {
        throw Error(ErrorCategory::invalid_input, "non-finite marker coordinate");
      }
      c.unloaded[j] += m.markers_unloaded[j];
      c.loaded[j] += m.markers_loaded[j];
    }
    ++c.repetitions;
  }
  std::vector<ConfigurationDeflection> out;
  out.reserve(by_config.size());
  for (auto& [id, c] : by_config) {
    const double r = static_cast<double>(c.repetitions);
    for (std::size_t j = 0; j < marker_count; ++j) {
      c.unloaded[j] /= r;
      c.loaded[j] /= r;
    }
    out.push_back(std::move(c));
  }
  return out;
}

ParameterLayout::ParameterLayout(std::size_t n_joints, std::optional<std::size_t> grouped_joint,
                                 std::span<const double> q2_values, double tolerance)
    : n_joints_(n_joints), tolerance_(tolerance) {
  if (grouped_joint && *grouped_joint < n_joints) {
    grouped_joint_ = grouped_joint;
    std::vector<double> sorted(q2_values.begin(), q2_values.end());
    std::sort(sorted.begin(), sorted.end());
    for (double v : sorted) {
      if (group_q2_.empty() || v - group_q2_.back() > tolerance) group_q2_.push_back(v);
    }
    if (group_q2_.empty()) {
      throw Error(ErrorCategory::invalid_input, "grouped layout needs at least one q2 value");
    }
  }
}

std::size_t ParameterLayout::group_of(const JointVector& q) const {
  if (!grouped_joint_) return 0;
  const double v = q[static_cast<Eigen::Index>(*grouped_joint_)];
  for (std::size_t g = 0; g < group_q2_.size(); ++g) {
    if (std::abs(v - group_q2_[g]) <= tolerance_) return g;
  }
  throw Error(ErrorCategory::invalid_input, "q2 = " + std::to_string(v) + " matches no group");
}

Eigen::Index ParameterLayout::column(std::size_t joint, std::size_t group) const {
  if (!grouped_joint_ || joint < *grouped_joint_) return static_cast<Eigen::Index>(joint);
  if (joint == *grouped_joint_) return static_cast<Eigen::Index>(joint + group);
  return static_cast<Eigen::Index>(joint + group_q2_.size() - 1);
}

std::string ParameterLayout::parameter_name(Eigen::Index column_index) const {
  const auto c = static_cast<std::size_t>(column_index);
  if (!grouped_joint_ || c < *grouped_joint_) return "k" + std::to_string(c + 1);
  const std::size_t g = *grouped_joint_;
  if (c < g + group_q2_.size()) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "k%zu[q2=%.4f rad]", g + 1, group_q2_[c - g]);
    return buf;
  }
  return "k" + std::to_string(c - group_q2_.size() + 2);
}

Eigen::MatrixXd ParameterLayout::expand(const Eigen::Matrix3Xd& joint_block, std::size_t group) const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(3, static_cast<Eigen::Index>(size()));
  for (std::size_t j = 0; j < n_joints_; ++j) {
    out.col(column(j, group)) = joint_block.col(static_cast<Eigen::Index>(j));
  }
  return out;
}

std::vector<Eigen::Matrix3Xd> observation_matrix(const RobotModel& model, const JointVector& q,
                                                 const Wrench& F) {
  require_nonsingular(model, q);
  const JointVector zero = JointVector::Zero(q.size());
  const Eigen::VectorXd tau = jacobian_virtual(model, q).transpose() * F.stacked();
  std::vector<Eigen::Matrix3Xd> blocks;
  blocks.reserve(model.marker_offsets.size());
  for (const auto& m : model.marker_offsets) {
    blocks.push_back(point_jacobian(model, q, zero, m) * tau.asDiagonal());
  }
  return blocks;
}

Eigen::VectorXd ExtendedCompliances::joint_compliances() const {
  const auto n = static_cast<Eigen::Index>(layout.n_joints());
  Eigen::VectorXd out(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto grouped = layout.grouped_joint();
    if (grouped && static_cast<std::size_t>(j) == *grouped) {
      out[j] = layout.group_count() == 1 ? k[layout.column(*grouped, 0)] : kNaN;
    } else {
      out[j] = k[layout.column(static_cast<std::size_t>(j), 0)];
    }
  }
  return out;
}

std::vector<Joint2Group> ExtendedCompliances::k2_groups() const {
  std::vector<Joint2Group> out;
  const auto grouped = layout.grouped_joint();
  if (!grouped) return out;
  for (std::size_t g = 0; g < layout.group_count(); ++g) {
    const Eigen::Index c = layout.column(*grouped, g);
    out.push_back({layout.group_q2()[g], k[c], covariance(c, c)});
  }
  return out;
}

Eigen::MatrixXd ExtendedCompliances::k2_covariance() const {
  const auto grouped = layout.grouped_joint();
  if (!grouped) return {};
  const auto m = static_cast<Eigen::Index>(layout.group_count());
  return covariance.block(layout.column(*grouped, 0), layout.column(*grouped, 0), m, m);
}

ExtendedCompliances identify_extended_compliances(std::span<const LoadedMeasurement> dataset,
                                                  const RobotModel& model,
                                                  const IdentificationOptions& options) {
  const auto configs = average_repetitions(dataset, model.marker_offsets.size());
  return identify_extended_compliances(std::span<const ConfigurationDeflection>(configs), model,
                                       options);
}

ExtendedCompliances identify_extended_compliances(std::span<const ConfigurationDeflection> configs,
                                                  const RobotModel& model,
                                                  const IdentificationOptions& options) {
  if (configs.empty()) throw Error(ErrorCategory::empty_dataset, "no configurations to identify from");
  if (model.marker_offsets.empty()) {
    throw Error(ErrorCategory::invalid_input, "model declares no markers");
  }
  std::optional<std::size_t> grouped;
  if (options.mode == IdentificationMode::compensator_aware &&
      options.compensated_joint < model.n_joints()) {
    grouped = options.compensated_joint;
  }
  std::vector<double> q2_values;
  if (grouped) {
    for (const auto& c : configs) q2_values.push_back(c.q[static_cast<Eigen::Index>(*grouped)]);
  }
  ExtendedCompliances out;
  out.layout = ParameterLayout(model.n_joints(), grouped, q2_values, options.group_tolerance);
  const auto p = static_cast<Eigen::Index>(out.layout.size());

  std::vector<Eigen::MatrixXd> rows;
  std::vector<Eigen::Vector3d> targets;
  Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
  for (const auto& c : configs) {
    const auto blocks = observation_matrix(model, c.q, c.F);
    const std::size_t group = out.layout.group_of(c.q);
    for (std::size_t j = 0; j < blocks.size(); ++j) {
      Eigen::MatrixXd B = out.layout.expand(blocks[j], group);
      const Eigen::Vector3d dp = c.displacement(j);
      normal.noalias() += B.transpose() * B;
      rhs.noalias() += B.transpose() * dp;
      rows.push_back(std::move(B));
      targets.push_back(dp);
    }
  }
  out.equations = 3 * rows.size();

  // All parameters share one unit, so a column that is negligible next to the
  // strongest one is unobservable even though equilibration would hide it.
  Eigen::VectorXd scale = normal.diagonal();
  const double strongest = scale.maxCoeff();
  for (Eigen::Index i = 0; i < p; ++i) {
    scale[i] = scale[i] > strongest / (options.max_condition * options.max_condition) ? 1.0 / std::sqrt(scale[i]) : 0.0;
  }
  const Eigen::MatrixXd scaled = scale.asDiagonal() * normal * scale.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scaled);
  const double lo = eig.eigenvalues()[0];
  const double hi = eig.eigenvalues()[p - 1];
  out.condition_number = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (!(out.condition_number <= options.max_condition) || scale.minCoeff() == 0.0) {
    Eigen::Index weakest = 0;
    eig.eigenvectors().col(0).cwiseAbs().maxCoeff(&weakest);
    if (scale.minCoeff() == 0.0) scale.minCoeff(&weakest);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%.3g", out.condition_number);
    throw Error(ErrorCategory::ill_conditioned_plan,
                std::string("identification plan is ill-conditioned (condition number ") + buf +
                    "); weakest direction dominated by " + out.layout.parameter_name(weakest));
  }

  const Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
  out.k = ldlt.solve(rhs);
  double rss = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) rss += (targets[i] - rows[i] * out.k).squaredNorm();
  out.residual_rms = std::sqrt(rss / static_cast<double>(out.equations));
  double variance = 0.0;
  if (options.displacement_variance) {
    variance = *options.displacement_variance;
  } else if (out.equations > static_cast<std::size_t>(p)) {
    variance = rss / static_cast<double>(out.equations - static_cast<std::size_t>(p));
  }
  out.covariance = variance * ldlt.solve(Eigen::MatrixXd::Identity(p, p));

  for (Eigen::Index i = 0; i < p; ++i) {
    if (!(out.k[i] > 0.0)) {
      throw Error(ErrorCategory::model_inconsistency,
                  "identified compliance " + out.layout.parameter_name(i) + " is not positive");
    }
  }
  return out;
}

Joint2Regression regress_joint2_parameters(std::span<const Joint2Group> groups,
                                           const CompensatorGeometry& geometry,
                                           const Eigen::MatrixXd& k2_covariance) {
  const auto m = static_cast<Eigen::Index>(groups.size());
  if (m < 3) {
    throw Error(ErrorCategory::insufficient_groups,
                "compensator regression needs >= 3 distinct q2 groups, got " + std::to_string(m));
  }
  const double aL = geometry.a() * geometry.L;
  const double sign = geometry.convention == SpringConvention::plus ? 1.0 : -1.0;
  Eigen::MatrixXd C(m, 3);
  Eigen::VectorXd K(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& g = groups[static_cast<std::size_t>(i)];
    if (!(g.k2 > 0.0)) throw Error(ErrorCategory::model_inconsistency, "k2 group compliance not positive");
    const double s = spring_length(geometry, g.q2);
    const double c = sign * std::cos(geometry.alpha() - g.q2);
    const double sn = std::sin(geometry.alpha() - g.q2);
    C.row(i) << 1.0, -aL * c, aL / s * (aL / (s * s) * sn * sn + c);
    K[i] = 1.0 / g.k2;
  }
  const Eigen::Matrix3d normal = C.transpose() * C;
  const Eigen::Vector3d scale = normal.diagonal().cwiseSqrt().cwiseInverse();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(scale.asDiagonal() * normal * scale.asDiagonal());
  const auto& sv = svd.singularValues();
  if (!scale.allFinite() || !(sv[2] > 1e-12 * sv[0])) {
    throw Error(ErrorCategory::collinear_groups, "q2 groups do not separate the compensator parameters");
  }
  const Eigen::Matrix3d normal_inv = normal.inverse();
  const Eigen::Vector3d x = normal_inv * (C.transpose() * K);

  Eigen::Matrix3d cov_x = Eigen::Matrix3d::Zero();
  if (k2_covariance.rows() == m && k2_covariance.cols() == m) {
    const Eigen::VectorXd dK = -K.cwiseProduct(K);
    const Eigen::MatrixXd cov_K = dK.asDiagonal() * k2_covariance * dK.asDiagonal();
    cov_x = normal_inv * C.transpose() * cov_K * C * normal_inv;
  } else if (m > 3) {
    const double rss = (K - C * x).squaredNorm();
    cov_x = rss / static_cast<double>(m - 3) * normal_inv;
  }

  Joint2Regression out;
  out.K_theta2_0 = x[0];
  out.K_c = x[1];
  if (std::abs(x[1]) * aL < 1e-12 * std::abs(x[0])) {
    out.K_c = 0.0;
    out.s_0 = kNaN;
    out.compensator_present = false;
    out.covariance.topLeftCorner<2, 2>() = cov_x.topLeftCorner<2, 2>();
    return out;
  }
  out.s_0 = x[2] / x[1];
  Eigen::Matrix3d G = Eigen::Matrix3d::Identity();
  G(2, 1) = -x[2] / (x[1] * x[1]);
  G(2, 2) = 1.0 / x[1];
  out.covariance = G * cov_x * G.transpose();
  return out;
}

RobotModel RigidCorrections::apply(const RobotModel& nominal) const {
  RobotModel out = nominal;
  out.base = base_correction * nominal.base;
  out.tool = nominal.tool * tool_correction;
  return out;
}

RigidCorrections register_base_tool(const RobotModel& nominal,
                                    std::span<const ConfigurationDeflection> configs) {
  if (configs.empty()) throw Error(ErrorCategory::empty_dataset, "no configurations to register");
  const auto& markers = nominal.marker_offsets;
  std::vector<Eigen::Isometry3d> chains;
  for (const auto& c : configs) chains.push_back(bare_chain(nominal, c.q));

  Eigen::Isometry3d dB = Eigen::Isometry3d::Identity();
  Eigen::Isometry3d dT = Eigen::Isometry3d::Identity();
  auto predict = [&](const Eigen::Isometry3d& b, const Eigen::Isometry3d& t, std::size_t i,
                     std::size_t j) -> Eigen::Vector3d {
    return b * nominal.base * chains[i] * nominal.tool * t * markers[j];
  };
  std::vector<Eigen::Vector3d> measured;
  for (const auto& c : configs) {
    for (const auto& p : c.unloaded) measured.push_back(p);
  }

  // Alternating Procrustes for a starting point, then Gauss-Newton on both
  // transforms together.
  for (int iter = 0; iter < 10; ++iter) {
    std::vector<Eigen::Vector3d> predicted;
    for (std::size_t i = 0; i < configs.size(); ++i) {
      for (std::size_t j = 0; j < markers.size(); ++j) predicted.push_back(predict(Eigen::Isometry3d::Identity(), dT, i, j));
    }
    dB = rigid_registration(predicted, measured);
    std::vector<Eigen::Vector3d> local, offsets;
    for (std::size_t i = 0; i < configs.size(); ++i) {
      const Eigen::Isometry3d to_tool = (dB * nominal.base * chains[i] * nominal.tool).inverse();
      for (std::size_t j = 0; j < markers.size(); ++j) {
        local.push_back(to_tool * configs[i].unloaded[j]);
        offsets.push_back(markers[j]);
      }
    }
    if (configs.size() * markers.size() >= 3) dT = rigid_registration(offsets, local);
  }

  const auto n_res = static_cast<Eigen::Index>(3 * measured.size());
  auto residual = [&](const Eigen::Isometry3d& b, const Eigen::Isometry3d& t) {
    Eigen::VectorXd r(n_res);
    Eigen::Index k = 0;
    for (std::size_t i = 0; i < configs.size(); ++i) {
      for (std::size_t j = 0; j < markers.size(); ++j, k += 3) {
        r.segment<3>(k) = predict(b, t, i, j) - configs[i].unloaded[j];
      }
    }
    return r;
  };
  Eigen::VectorXd r = residual(dB, dT);
  for (int iter = 0; iter < 30; ++iter) {
    Eigen::MatrixXd J(n_res, 12);
    constexpr double h = 1e-6;
    for (int k = 0; k < 12; ++k) {
      Eigen::Matrix<double, 6, 1> xi = Eigen::Matrix<double, 6, 1>::Zero();
      xi[k % 6] = h;
      const Eigen::Isometry3d up = small_motion(xi), dn = small_motion(-xi);
      if (k < 6) {
        J.col(k) = (residual(up * dB, dT) - residual(dn * dB, dT)) / (2 * h);
      } else {
        J.col(k) = (residual(dB, dT * up) - residual(dB, dT * dn)) / (2 * h);
      }
    }
    const Eigen::VectorXd step = J.completeOrthogonalDecomposition().solve(-r);
    const Eigen::Isometry3d nB = small_motion(step.head<6>()) * dB;
    const Eigen::Isometry3d nT = dT * small_motion(step.tail<6>());
    const Eigen::VectorXd nr = residual(nB, nT);
    if (nr.squaredNorm() > r.squaredNorm()) break;
    dB = nB;
    dT = nT;
    r = nr;
    if (step.norm() < 1e-14) break;
  }

  RigidCorrections out;
  out.base_correction = dB;
  out.tool_correction = dT;
  out.residual_rms = std::sqrt(r.squaredNorm() / static_cast<double>(measured.size()));
  return out;
}

TwoStepResult run_two_step_identification(std::span<const LoadedMeasurement> dataset,
                                          const CompensatorGeometry& geometry,
                                          const RobotModel& nominal,
                                          const IdentificationOptions& options) {
  const auto configs = average_repetitions(dataset, nominal.marker_offsets.size());
  TwoStepResult out;
  out.corrections = register_base_tool(nominal, configs);
  const RobotModel corrected = out.corrections.apply(nominal);
  out.step1 = identify_extended_compliances(std::span<const ConfigurationDeflection>(configs),
                                            corrected, options);

  out.identified.robot = corrected;
  Eigen::VectorXd k = out.step1.joint_compliances();
  const auto joint = static_cast<Eigen::Index>(options.compensated_joint);
  if (out.step1.layout.grouped_joint()) {
    const auto groups = out.step1.k2_groups();
    out.step2 = regress_joint2_parameters(groups, geometry, out.step1.k2_covariance());
    k[joint] = 1.0 / out.step2->K_theta2_0;
    if (out.step2->compensator_present) {
      CompensatorModel comp;
      comp.geometry = geometry;
      comp.K_c = out.step2->K_c;
      comp.s_0 = out.step2->s_0;
      comp.K_theta2_0 = out.step2->K_theta2_0;
      comp.joint = options.compensated_joint;
      out.identified.compensator = comp;
    }
  }
  out.identified.robot.compliances = k;
  return out;
}

}  // namespace elastocal
