#include "elastocal/experiment_design.hpp"

#include "elastocal/error.hpp"
#include "elastocal/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace elastocal {

namespace {

std::optional<std::size_t> grouped_joint(const ElastoModel& model) {
  if (model.compensator && model.compensator->joint < model.robot.n_joints()) {
    return model.compensator->joint;
  }
  return std::nullopt;
}

std::vector<double> distinct_sorted(std::vector<double> v, double tolerance) {
  std::sort(v.begin(), v.end());
  std::vector<double> out;
  for (double x : v) {
    if (out.empty() || x - out.back() > tolerance) out.push_back(x);
  }
  return out;
}

}  // namespace

std::vector<double> ExperimentPlan::q2_groups(std::size_t compensated_joint, double tolerance) const {
  std::vector<double> q2;
  for (const auto& e : entries) {
    if (compensated_joint < static_cast<std::size_t>(e.q.size())) {
      q2.push_back(e.q[static_cast<Eigen::Index>(compensated_joint)]);
    }
  }
  return distinct_sorted(std::move(q2), tolerance);
}

GridCriterion::GridCriterion(const CandidateGrid& grid, const TestPose& test, const ElastoModel& model) {
  const auto& robot = model.robot;
  if (test.F0.is_zero()) throw Error(ErrorCategory::invalid_input, "test pose load F0 must be nonzero");
  require_nonsingular(robot, test.q0);
  const Matrix6Xd J0 = jacobian_virtual(robot, test.q0);
  const Eigen::VectorXd tau0 = J0.transpose() * test.F0.stacked();
  test_block_ = J0.topRows<3>() * tau0.asDiagonal();

  const auto joint = grouped_joint(model);
  std::vector<double> q2;
  if (joint) {
    for (const auto& c : grid.candidates) q2.push_back(c.q[static_cast<Eigen::Index>(*joint)]);
  }
  const ParameterLayout layout(robot.n_joints(), joint, q2, 1e-6);
  group_count_ = layout.group_count();

  const auto n = static_cast<Eigen::Index>(robot.n_joints());
  for (const auto& c : grid.candidates) {
    Eigen::MatrixXd N = Eigen::MatrixXd::Zero(n, n);
    for (const auto& B : observation_matrix(robot, c.q, c.F)) N.noalias() += B.transpose() * B;
    normals_.push_back(std::move(N));
    group_.push_back(layout.group_of(c.q));
  }
}

double GridCriterion::evaluate(const std::vector<std::size_t>& selection) const {
  if (selection.empty()) return kInfeasibleCriterion;
  const Eigen::Index n = test_block_.cols();
  std::vector<Eigen::MatrixXd> sums(group_count_);
  std::vector<bool> used(group_count_, false);
  for (std::size_t idx : selection) {
    const std::size_t g = group_[idx];
    if (!used[g]) {
      sums[g] = normals_[idx];
      used[g] = true;
    } else {
      sums[g] += normals_[idx];
    }
  }
  Eigen::MatrixXd inverse_sum = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t g = 0; g < group_count_; ++g) {
    if (!used[g]) continue;
    const Eigen::VectorXd d = sums[g].diagonal();
    if (!(d.minCoeff() > 1e-20 * d.maxCoeff())) return kInfeasibleCriterion;
    const Eigen::VectorXd s = d.cwiseSqrt().cwiseInverse();
    const Eigen::LLT<Eigen::MatrixXd> llt(s.asDiagonal() * sums[g] * s.asDiagonal());
    if (llt.info() != Eigen::Success || llt.rcond() < 1e-12) return kInfeasibleCriterion;
    inverse_sum += s.asDiagonal() * llt.solve(Eigen::MatrixXd::Identity(n, n)) * s.asDiagonal();
  }
  return (test_block_ * inverse_sum * test_block_.transpose()).trace();
}

double plan_criterion(const ExperimentPlan& plan, const TestPose& test, const ElastoModel& model) {
  if (plan.entries.empty()) return kInfeasibleCriterion;
  CandidateGrid grid;
  grid.candidates = plan.entries;
  const GridCriterion criterion(grid, test, model);
  std::vector<std::size_t> all(plan.entries.size());
  std::iota(all.begin(), all.end(), 0);
  return criterion.evaluate(all);
}

CandidateGrid build_candidate_grid(const ElastoModel& model, const GridOptions& options) {
  const auto& robot = model.robot;
  const auto n = static_cast<Eigen::Index>(robot.n_joints());
  JointVector lower = options.q_lower, upper = options.q_upper;
  if (lower.size() != n) {
    lower.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) lower[j] = robot.links[static_cast<std::size_t>(j)].q_min;
  }
  if (upper.size() != n) {
    upper.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) upper[j] = robot.links[static_cast<std::size_t>(j)].q_max;
  }
  if (options.directions.empty()) throw Error(ErrorCategory::invalid_input, "no load directions");
  const auto joint = grouped_joint(model);
  std::vector<double> levels = options.q2_levels;
  const bool stratified = joint && !levels.empty();
  if (!stratified) levels = {0.0};

  CandidateGrid grid;
  Rng rng(derive_seed(options.seed, 0x67726964));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, options.directions.size() - 1);
  for (std::size_t level = 0; level < levels.size(); ++level) {
    for (std::size_t k = 0; k < options.poses_per_level; ++k) {
      bool found = false;
      for (int attempt = 0; attempt < 10000 && !found; ++attempt) {
        JointVector q(n);
        for (Eigen::Index j = 0; j < n; ++j) q[j] = lower[j] + (upper[j] - lower[j]) * unit(rng);
        if (stratified) q[static_cast<Eigen::Index>(*joint)] = levels[level];
        try {
          robot.check_limits(q);
        } catch (const Error&) {
          continue;
        }
        if (jacobian_conditioning(jacobian_virtual(robot, q)) < options.min_conditioning) continue;
        const Eigen::Vector3d dir = options.directions[pick(rng)].normalized();
        const Eigen::Vector3d force = options.force_magnitude * dir;
        const Eigen::Vector3d lever = forward_kinematics(robot, q).tool_pose.orientation * options.load_lever;
        grid.candidates.push_back({q, Wrench{force, lever.cross(force)}});
        if (stratified) grid.stratum.push_back(level);
        found = true;
      }
      if (!found) {
        throw Error(ErrorCategory::infeasible_plan, "no well-conditioned pose found in the sampling box");
      }
    }
  }
  return grid;
}

std::vector<std::size_t> random_selection(const CandidateGrid& grid, std::size_t m,
                                          const SearchConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  auto draw = [&](std::vector<std::size_t> pool, std::size_t count, std::vector<std::size_t>& out) {
    if (pool.empty() || (!config.allow_repeats && pool.size() < count)) {
      throw Error(ErrorCategory::infeasible_plan, "candidate pool too small for the requested plan");
    }
    if (config.allow_repeats) {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      for (std::size_t i = 0; i < count; ++i) out.push_back(pool[pick(rng)]);
    } else {
      std::shuffle(pool.begin(), pool.end(), rng);
      out.insert(out.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
    }
  };
  std::vector<std::size_t> out;
  if (config.per_stratum.empty()) {
    std::vector<std::size_t> pool(grid.candidates.size());
    std::iota(pool.begin(), pool.end(), 0);
    draw(std::move(pool), m, out);
    return out;
  }
  for (std::size_t s = 0; s < config.per_stratum.size(); ++s) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < grid.stratum.size(); ++i) {
      if (grid.stratum[i] == s) pool.push_back(i);
    }
    draw(std::move(pool), config.per_stratum[s], out);
  }
  return out;
}

PlanSearchResult optimize_plan(const CandidateGrid& grid, std::size_t m, const TestPose& test,
                               const ElastoModel& model, const SearchConfig& config) {
  if (grid.candidates.empty()) throw Error(ErrorCategory::infeasible_plan, "candidate grid is empty");
  if (m == 0) throw Error(ErrorCategory::invalid_input, "plan size must be positive");
  if (!config.per_stratum.empty()) {
    const std::size_t total =
        std::accumulate(config.per_stratum.begin(), config.per_stratum.end(), std::size_t{0});
    if (total != m || grid.stratum.size() != grid.candidates.size()) {
      throw Error(ErrorCategory::invalid_input, "strata quotas do not match the plan size or grid");
    }
  }
  const GridCriterion criterion(grid, test, model);
  PlanSearchResult best;

  for (std::size_t restart = 0; restart < std::max<std::size_t>(config.restarts, 1); ++restart) {
    std::vector<std::size_t> current;
    double value = kInfeasibleCriterion;
    for (std::size_t attempt = 0; attempt < 100 && !std::isfinite(value); ++attempt) {
      current = random_selection(grid, m, config, derive_seed(config.seed, restart, attempt));
      value = criterion.evaluate(current);
      ++best.evaluations;
      best.best_evaluated = std::min(best.best_evaluated, value);
    }
    if (!std::isfinite(value)) continue;

    for (std::size_t sweep = 0; sweep < config.max_sweeps; ++sweep) {
      bool improved = false;
      for (std::size_t pos = 0; pos < current.size(); ++pos) {
        const std::size_t original = current[pos];
        std::size_t best_candidate = original;
        double best_value = value;
        for (std::size_t c = 0; c < grid.candidates.size(); ++c) {
          if (c == original) continue;
          if (!grid.stratum.empty() && !config.per_stratum.empty() &&
              grid.stratum[c] != grid.stratum[original]) {
            continue;
          }
          if (!config.allow_repeats && std::find(current.begin(), current.end(), c) != current.end()) {
            continue;
          }
          current[pos] = c;
          const double v = criterion.evaluate(current);
          ++best.evaluations;
          best.best_evaluated = std::min(best.best_evaluated, v);
          if (v < best_value) {
            best_value = v;
            best_candidate = c;
          }
        }
        current[pos] = best_candidate;
        if (best_candidate != original && best_value < value * (1.0 - 1e-12)) {
          value = best_value;
          improved = true;
        } else {
          current[pos] = original;
        }
      }
      if (!improved) break;
    }
    if (value < best.criterion) {
      best.criterion = value;
      best.candidate_indices = current;
    }
  }
  if (!std::isfinite(best.criterion)) {
    throw Error(ErrorCategory::infeasible_plan, "no feasible plan found on the candidate grid");
  }
  best.plan.test = test;
  for (std::size_t idx : best.candidate_indices) best.plan.entries.push_back(grid.candidates[idx]);
  return best;
}

}  // namespace elastocal
