#pragma once

#include <stdexcept>
#include <string>

namespace plmgnn {

enum class ErrorCode {
  grammar_unavailable,
  encoding,
  duplicate_edge,
  dimension_mismatch,
  duplicate_sample,
  missing_sample,
  checksum_mismatch,
  coverage_gap,
  format,
  io,
  degenerate_sample,
  empty_class,
  empty_split,
  invalid_argument,
  unbalanced_design,
  zero_residual_variance,
  no_positives,
  single_class,
  parse_failure,
  // numerical failures: reported with exit code 2 by the CLI
  non_finite,
  eigensolver,
};

const char* to_string(ErrorCode code) noexcept;

inline bool is_numerical(ErrorCode code) noexcept {
  return code == ErrorCode::non_finite || code == ErrorCode::eigensolver ||
         code == ErrorCode::zero_residual_variance;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace plmgnn
