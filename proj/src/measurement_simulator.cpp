#include "elastocal/measurement_simulator.hpp"

#include "elastocal/error.hpp"
#include "elastocal/random.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

namespace elastocal {

namespace {

constexpr std::uint64_t kCompensatorStream = 0x636f6d70;
constexpr std::uint64_t kMeasurementStream = 0x6d656173;

class NoiseSource {
 public:
  NoiseSource(double sigma, std::uint64_t seed) : sigma_(sigma), rng_(seed) {}

  Eigen::Vector3d sample() {
    if (!(sigma_ > 0.0)) return Eigen::Vector3d::Zero();
    std::normal_distribution<double> normal(0.0, sigma_);
    const double x = normal(rng_);
    const double y = normal(rng_);
    const double z = normal(rng_);
    return {x, y, z};
  }

 private:
  double sigma_;
  Rng rng_;
};

void append(std::string& text, const char* key, double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s=%.17g;", key, value);
  text += buf;
}

void append(std::string& text, const char* key, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) append(text, key, m.data()[i]);
}

}  // namespace

ElastoModel GroundTruth::true_model() const {
  ElastoModel out = model;
  out.robot.base = base_perturbation * model.robot.base;
  out.robot.tool = model.robot.tool * tool_perturbation;
  return out;
}

void GroundTruth::validate() const {
  model.validate();
  if (!model.compensator) return;
  const auto& g = model.compensator->geometry;
  if (!(g.L > 0.0)) throw Error(ErrorCategory::validation, "ground truth compensator L must be > 0");
}

std::vector<MarkerTrace> simulate_compensator_markers(const GroundTruth& truth,
                                                      const std::vector<double>& q2_set,
                                                      const std::vector<MarkerPlacement>& markers,
                                                      const NoiseSpec& noise) {
  if (!truth.model.compensator) {
    throw Error(ErrorCategory::invalid_input, "ground truth has no compensator to trace");
  }
  if (noise.sigma_position < 0.0) throw Error(ErrorCategory::validation, "noise sigma must be >= 0");
  const auto& g = truth.model.compensator->geometry;
  const Eigen::Vector3d offset(g.a_x, g.a_y, 0.0);
  const Eigen::Vector3d pivot = g.convention == SpringConvention::plus ? -offset : offset;
  const Eigen::Isometry3d& frame = truth.compensator_frame;
  NoiseSource source(noise.sigma_position, derive_seed(noise.seed, kCompensatorStream));

  std::vector<MarkerTrace> traces(markers.size() + 1);
  traces[0].marker_id = "P1";
  for (std::size_t j = 0; j < markers.size(); ++j) {
    traces[j + 1].marker_id = "P0" + std::to_string(j + 1);
    traces[j + 1].radius = markers[j].radius;
    traces[j + 1].phase = markers[j].phase;
  }
  for (double q2 : q2_set) {
    const Eigen::Vector3d p1(g.L * std::cos(q2), g.L * std::sin(q2), 0.0);
    traces[0].samples.push_back({q2, frame * p1 + source.sample()});
    const Eigen::Vector3d body = p1 - pivot;
    const double phi = std::atan2(body.y(), body.x());
    for (std::size_t j = 0; j < markers.size(); ++j) {
      const auto& mk = markers[j];
      const Eigen::Vector3d local = pivot + Eigen::Vector3d(mk.radius * std::cos(mk.phase + phi),
                                                            mk.radius * std::sin(mk.phase + phi),
                                                            mk.axial_offset);
      traces[j + 1].samples.push_back({q2, frame * local + source.sample()});
    }
  }
  return traces;
}

std::vector<LoadedMeasurement> simulate_loaded_measurement(const GroundTruth& truth,
                                                           const JointVector& q, const Wrench& F,
                                                           const NoiseSpec& noise,
                                                           std::size_t repetitions,
                                                           std::size_t config_id) {
  if (noise.sigma_position < 0.0) throw Error(ErrorCategory::validation, "noise sigma must be >= 0");
  if (repetitions == 0) throw Error(ErrorCategory::invalid_input, "repetitions must be positive");
  const ElastoModel model = truth.true_model();
  const auto unloaded = forward_kinematics(model.robot, q).markers;
  std::vector<Eigen::Vector3d> loaded;
  if (truth.deflection_model == LoadHessian::off) {
    const auto d = predict_marker_deflections(model, q, F, LoadHessian::off);
    for (std::size_t j = 0; j < unloaded.size(); ++j) loaded.push_back(unloaded[j] + d[j]);
  } else {
    const JointVector theta = virtual_joint_deflection(model, q, F, LoadHessian::on);
    loaded = forward_kinematics(model.robot, q, theta).markers;
  }

  const std::uint64_t stream = derive_seed(noise.seed, kMeasurementStream);
  std::vector<LoadedMeasurement> out;
  for (std::size_t r = 0; r < repetitions; ++r) {
    NoiseSource source(noise.sigma_position, derive_seed(stream, config_id, r));
    LoadedMeasurement m;
    m.config_id = config_id;
    m.repetition = r;
    m.q = q;
    m.F = F;
    for (const auto& p : unloaded) m.markers_unloaded.push_back(p + source.sample());
    for (const auto& p : loaded) m.markers_loaded.push_back(p + source.sample());
    out.push_back(std::move(m));
  }
  return out;
}

CalibrationDataset generate_calibration_dataset(const ExperimentPlan& plan, const GroundTruth& truth,
                                                const NoiseSpec& noise, std::size_t repetitions) {
  if (plan.entries.empty()) throw Error(ErrorCategory::empty_dataset, "plan has no entries");
  CalibrationDataset out;
  for (std::size_t i = 0; i < plan.entries.size(); ++i) {
    auto reps = simulate_loaded_measurement(truth, plan.entries[i].q, plan.entries[i].F, noise,
                                            repetitions, i);
    for (auto& m : reps) out.measurements.push_back(std::move(m));
  }
  out.manifest.seed = noise.seed;
  out.manifest.sigma_position = noise.sigma_position;
  out.manifest.repetitions = repetitions;
  out.manifest.entries = plan.entries.size();
  const std::size_t joint = truth.model.compensator ? truth.model.compensator->joint : 1;
  out.manifest.q2_groups = plan.q2_groups(joint).size();
  out.manifest.truth_hash = truth_hash(truth);
  return out;
}

std::vector<PlanEntry> random_validation_entries(const RobotModel& robot, std::size_t count,
                                                 double force_magnitude, std::uint64_t seed,
                                                 double min_conditioning) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto n = static_cast<Eigen::Index>(robot.n_joints());
  std::vector<PlanEntry> out;
  for (std::size_t attempt = 0; out.size() < count; ++attempt) {
    if (attempt > 1000 * (count + 1)) {
      throw Error(ErrorCategory::infeasible_plan, "no well-conditioned validation pose found");
    }
    JointVector q(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& l = robot.links[static_cast<std::size_t>(j)];
      q[j] = l.q_min + (l.q_max - l.q_min) * unit(rng);
    }
    Eigen::Vector3d dir(normal(rng), normal(rng), normal(rng));
    if (jacobian_conditioning(jacobian_virtual(robot, q)) < min_conditioning || dir.norm() < 1e-6) continue;
    out.push_back({q, Wrench{force_magnitude * dir.normalized(), Eigen::Vector3d::Zero()}});
  }
  return out;
}

std::string truth_hash(const GroundTruth& truth) {
  std::string text;
  const auto& r = truth.model.robot;
  for (const auto& l : r.links) {
    append(text, "a", l.a);
    append(text, "alpha", l.alpha);
    append(text, "d", l.d);
    append(text, "offset", l.offset);
  }
  append(text, "base", r.base.matrix());
  append(text, "tool", r.tool.matrix());
  for (const auto& m : r.marker_offsets) append(text, "marker", m);
  append(text, "k", r.compliances);
  if (truth.model.compensator) {
    const auto& c = *truth.model.compensator;
    append(text, "L", c.geometry.L);
    append(text, "ax", c.geometry.a_x);
    append(text, "ay", c.geometry.a_y);
    append(text, "conv", c.geometry.convention == SpringConvention::plus ? 1.0 : -1.0);
    append(text, "Kc", c.K_c);
    append(text, "s0", c.s_0);
    append(text, "K20", c.K_theta2_0);
  }
  append(text, "bp", truth.base_perturbation.matrix());
  append(text, "tp", truth.tool_perturbation.matrix());
  append(text, "cf", truth.compensator_frame.matrix());
  append(text, "hess", truth.deflection_model == LoadHessian::on ? 1.0 : 0.0);

  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

CompensatorModel reference_compensator() {
  CompensatorModel c;
  c.geometry = {0.18472, 0.68593, 0.12330, SpringConvention::plus};
  c.K_c = 8.0e6;
  c.s_0 = 0.80;
  c.K_theta2_0 = 2.0e6;
  c.joint = 1;
  return c;
}

std::vector<MarkerPlacement> balanced_marker_placement() {
  constexpr double pi = std::numbers::pi;
  return {{0.15, 0.30, 0.0}, {0.10, 1.90, 0.0}, {0.15, pi + 0.30, 0.0}, {0.10, pi + 1.90, 0.0}};
}

std::vector<double> geometry_sweep_q2() {
  constexpr double deg = std::numbers::pi / 180.0;
  return {0.0, -30 * deg, -60 * deg, -90 * deg, -120 * deg, -140 * deg};
}

}  // namespace elastocal
