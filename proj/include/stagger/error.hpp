#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace stagger {

// Numeric values double as CLI exit codes.
enum class ErrorCode : int {
  kIo = 3,
  kInvalidArgument = 4,
  kParse = 5,
  kDuplicateCell = 10,
  kNonAbsorbingTreatment = 11,
  kNonFiniteOutcome = 12,
  kNonPositiveOutcome = 13,
  kUnknownUnit = 14,
  kRankDeficient = 20,
  kNonConvergence = 21,
  kSingleCluster = 22,
  kUnderidentified = 23,
  kNoSwitchers = 30,
  kAllReplicationsUnidentified = 31,
  kSingularCovariance = 32,
  kNoMatches = 40,
  kBaselineMissingEverywhere = 41,
  kNegativeValue = 42,
  kInvalidConfig = 50,
};

inline std::string_view error_class_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kParse: return "ParseError";
    case ErrorCode::kDuplicateCell: return "DuplicateCell";
    case ErrorCode::kNonAbsorbingTreatment: return "NonAbsorbingTreatment";
    case ErrorCode::kNonFiniteOutcome: return "NonFiniteOutcome";
    case ErrorCode::kNonPositiveOutcome: return "NonPositiveOutcome";
    case ErrorCode::kUnknownUnit: return "UnknownUnit";
    case ErrorCode::kRankDeficient: return "RankDeficient";
    case ErrorCode::kNonConvergence: return "NonConvergence";
    case ErrorCode::kSingleCluster: return "SingleCluster";
    case ErrorCode::kUnderidentified: return "Underidentified";
    case ErrorCode::kNoSwitchers: return "NoSwitchers";
    case ErrorCode::kAllReplicationsUnidentified: return "AllReplicationsUnidentified";
    case ErrorCode::kSingularCovariance: return "SingularCovariance";
    case ErrorCode::kNoMatches: return "NoMatches";
    case ErrorCode::kBaselineMissingEverywhere: return "BaselineMissingEverywhere";
    case ErrorCode::kNegativeValue: return "NegativeValue";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

/// Every failure raised by the library. `detail` carries structured context
/// such as the offending column names of a rank-deficient design.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::vector<std::string> detail = {})
      : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view class_name() const noexcept { return error_class_name(code_); }
  const std::vector<std::string>& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::vector<std::string> detail_;
};

}  // namespace stagger
