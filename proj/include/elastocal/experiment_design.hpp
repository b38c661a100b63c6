#pragma once

// Test-pose based selection of measurement configurations. The criterion is
//
//   trace( A0 * sum_g ( sum_{i in g} A_i^T A_i )^-1 * A0^T )
//
// where g runs over the q2 groups of the plan, A_i stacks the position rows
// of the observation blocks of all markers for entry i, and A0 is the tool
// point block at the test pose (q0, F0). Per-group normal matrices live in
// joint coordinates, so each group carries its own joint-2 column.

#include "elastocal/elasto_ident.hpp"

#include <cstdint>
#include <limits>
#include <vector>

namespace elastocal {

struct TestPose {
  JointVector q0;
  Wrench F0;
};

struct PlanEntry {
  JointVector q;
  Wrench F;
};

struct ExperimentPlan {
  std::vector<PlanEntry> entries;
  TestPose test;

  // Distinct q2 values (ascending) of the compensated joint.
  std::vector<double> q2_groups(std::size_t compensated_joint, double tolerance = 1e-6) const;
};

inline constexpr double kInfeasibleCriterion = std::numeric_limits<double>::infinity();

// Returns kInfeasibleCriterion when any group normal matrix is singular.
double plan_criterion(const ExperimentPlan& plan, const TestPose& test, const ElastoModel& model);

// Candidate measurement set with optional strata (one stratum per q2 level).
struct CandidateGrid {
  std::vector<PlanEntry> candidates;
  std::vector<std::size_t> stratum;  // empty: unstratified
};

struct GridOptions {
  std::vector<double> q2_levels;   // compensated-joint values, rad
  std::size_t poses_per_level = 40;
  double force_magnitude = 1500.0;  // N
  // Unit load directions in the world frame; one is drawn per pose.
  std::vector<Eigen::Vector3d> directions = {
      Eigen::Vector3d::UnitX(), -Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitY(),
      -Eigen::Vector3d::UnitY(), Eigen::Vector3d::UnitZ(), -Eigen::Vector3d::UnitZ()};
  // Load application point in the tool frame (m). A pure force at the TCP
  // produces no torque about the last joint, which leaves k6 unobservable.
  Eigen::Vector3d load_lever = Eigen::Vector3d(0.20, 0.10, 0.0);
  // Joint sampling box (rad) for the joints other than the compensated one.
  JointVector q_lower;
  JointVector q_upper;
  double min_conditioning = 1e-3;
  std::uint64_t seed = 1;
};

// Random feasible, well-conditioned poses stratified by q2 level.
CandidateGrid build_candidate_grid(const ElastoModel& model, const GridOptions& options);

struct SearchConfig {
  std::size_t restarts = 16;
  std::uint64_t seed = 1;
  // Entries drawn from each stratum; empty means unconstrained selection.
  std::vector<std::size_t> per_stratum;
  bool allow_repeats = false;
  std::size_t max_sweeps = 50;
};

struct PlanSearchResult {
  ExperimentPlan plan;
  std::vector<std::size_t> candidate_indices;
  double criterion = kInfeasibleCriterion;
  // Smallest criterion seen during the whole search, accepted or not.
  double best_evaluated = kInfeasibleCriterion;
  std::size_t evaluations = 0;
};

// Multi-start greedy exchange over the candidate grid.
PlanSearchResult optimize_plan(const CandidateGrid& grid, std::size_t m, const TestPose& test,
                               const ElastoModel& model, const SearchConfig& config = {});

// Criterion evaluator over a fixed grid with per-candidate normal matrices
// precomputed; shared by the optimizer and random baselines.
class GridCriterion {
 public:
  GridCriterion(const CandidateGrid& grid, const TestPose& test, const ElastoModel& model);

  double evaluate(const std::vector<std::size_t>& selection) const;
  std::size_t size() const { return normals_.size(); }

 private:
  std::vector<Eigen::MatrixXd> normals_;
  std::vector<std::size_t> group_;
  std::size_t group_count_ = 0;
  Eigen::MatrixXd test_block_;
};

// Random selection honoring the same strata quotas as the optimizer.
std::vector<std::size_t> random_selection(const CandidateGrid& grid, std::size_t m,
                                          const SearchConfig& config, std::uint64_t seed);

}  // namespace elastocal
