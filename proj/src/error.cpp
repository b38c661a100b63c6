#include "elastocal/error.hpp"

#include <cstdio>

namespace elastocal {

std::string_view category_name(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::invalid_input: return "invalid-input";
    case ErrorCategory::joint_limit: return "joint-limit";
    case ErrorCategory::singularity: return "singularity";
    case ErrorCategory::conditioning: return "conditioning";
    case ErrorCategory::model_inconsistency: return "model-inconsistency";
    case ErrorCategory::degenerate_data: return "degenerate-data";
    case ErrorCategory::ill_conditioned_plan: return "ill-conditioned-plan";
    case ErrorCategory::insufficient_groups: return "insufficient-groups";
    case ErrorCategory::collinear_groups: return "collinear-groups";
    case ErrorCategory::infeasible_plan: return "infeasible-plan";
    case ErrorCategory::empty_dataset: return "empty-dataset";
    case ErrorCategory::parse: return "parse";
    case ErrorCategory::validation: return "validation";
    case ErrorCategory::missing_input: return "missing-input";
    case ErrorCategory::io: return "io";
    case ErrorCategory::unknown_verb: return "unknown-verb";
  }
  return "unknown";
}

int exit_code(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::unknown_verb: return 2;
    case ErrorCategory::missing_input: return 3;
    case ErrorCategory::parse: return 4;
    case ErrorCategory::validation:
    case ErrorCategory::invalid_input:
    case ErrorCategory::joint_limit: return 5;
    case ErrorCategory::io: return 6;
    case ErrorCategory::empty_dataset:
    case ErrorCategory::degenerate_data:
    case ErrorCategory::insufficient_groups:
    case ErrorCategory::collinear_groups:
    case ErrorCategory::ill_conditioned_plan:
    case ErrorCategory::infeasible_plan: return 7;
    case ErrorCategory::singularity:
    case ErrorCategory::conditioning:
    case ErrorCategory::model_inconsistency: return 8;
  }
  return 1;
}

namespace {

std::string joint_limit_message(std::size_t index, double value, double lower, double upper) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "joint %zu value %.9g rad outside limits [%.9g, %.9g]",
                index + 1, value, lower, upper);
  return buf;
}

}  // namespace

JointLimitError::JointLimitError(std::size_t joint_index, double value, double lower, double upper)
    : Error(ErrorCategory::joint_limit, joint_limit_message(joint_index, value, lower, upper)),
      joint_index_(joint_index) {}

}  // namespace elastocal
