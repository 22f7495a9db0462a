#include "plmgnn/error.hpp"

namespace plmgnn {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::grammar_unavailable: return "grammar unavailable";
    case ErrorCode::encoding: return "encoding error";
    case ErrorCode::duplicate_edge: return "duplicate edge";
    case ErrorCode::dimension_mismatch: return "dimension mismatch";
    case ErrorCode::duplicate_sample: return "duplicate sample";
    case ErrorCode::missing_sample: return "missing sample";
    case ErrorCode::checksum_mismatch: return "checksum mismatch";
    case ErrorCode::coverage_gap: return "coverage gap";
    case ErrorCode::format: return "format error";
    case ErrorCode::io: return "i/o error";
    case ErrorCode::degenerate_sample: return "degenerate sample";
    case ErrorCode::empty_class: return "empty class";
    case ErrorCode::empty_split: return "empty split";
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::unbalanced_design: return "unbalanced design";
    case ErrorCode::zero_residual_variance: return "zero residual variance";
    case ErrorCode::no_positives: return "no positives";
    case ErrorCode::single_class: return "single-class labels";
    case ErrorCode::parse_failure: return "parse failure";
    case ErrorCode::non_finite: return "non-finite value";
    case ErrorCode::eigensolver: return "eigensolver failure";
  }
  return "error";
}

}  // namespace plmgnn
