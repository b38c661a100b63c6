#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace elastocal {

enum class ErrorCategory {
  invalid_input,
  joint_limit,
  singularity,
  conditioning,
  model_inconsistency,
  degenerate_data,
  ill_conditioned_plan,
  insufficient_groups,
  collinear_groups,
  infeasible_plan,
  empty_dataset,
  parse,
  validation,
  missing_input,
  io,
  unknown_verb,
};

std::string_view category_name(ErrorCategory category);

// Process exit status used by the command line tool for each category.
int exit_code(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class JointLimitError : public Error {
 public:
  JointLimitError(std::size_t joint_index, double value, double lower, double upper);

  // Zero-based index of the offending joint.
  std::size_t joint_index() const noexcept { return joint_index_; }

 private:
  std::size_t joint_index_;
};

}  // namespace elastocal
