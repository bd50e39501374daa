#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace film {

// Every failure the library reports, one code per contract violation.
enum class Errc {
  missing_target_column,
  not_binary_target,
  unknown_positive_label,
  empty_after_cleaning,
  class_too_small,
  unreachable_proportion,
  not_imbalanced,
  bad_n,
  length_mismatch,
  one_class_only,
  no_positives,
  singular_fit,
  degenerate_data,
  width_mismatch,
  too_few_minority,
  bad_counts,
  incomplete_grid,
  too_few,
  incomplete_records,
  io_error,
  bad_config,
};

inline std::string_view errc_name(Errc c) {
  switch (c) {
    case Errc::missing_target_column: return "MissingTargetColumn";
    case Errc::not_binary_target: return "NotBinaryTarget";
    case Errc::unknown_positive_label: return "UnknownPositiveLabel";
    case Errc::empty_after_cleaning: return "EmptyAfterCleaning";
    case Errc::class_too_small: return "ClassTooSmall";
    case Errc::unreachable_proportion: return "UnreachableProportion";
    case Errc::not_imbalanced: return "NotImbalanced";
    case Errc::bad_n: return "BadN";
    case Errc::length_mismatch: return "LengthMismatch";
    case Errc::one_class_only: return "OneClassOnly";
    case Errc::no_positives: return "NoPositives";
    case Errc::singular_fit: return "SingularFit";
    case Errc::degenerate_data: return "DegenerateData";
    case Errc::width_mismatch: return "WidthMismatch";
    case Errc::too_few_minority: return "TooFewMinority";
    case Errc::bad_counts: return "BadCounts";
    case Errc::incomplete_grid: return "IncompleteGrid";
    case Errc::too_few: return "TooFew";
    case Errc::incomplete_records: return "IncompleteRecords";
    case Errc::io_error: return "IoError";
    case Errc::bad_config: return "BadConfig";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

  // Training-time failures; everything else is input/config validation.
  bool is_runtime() const noexcept {
    return code_ == Errc::singular_fit || code_ == Errc::io_error;
  }

 private:
  Errc code_;
};

}  // namespace film
