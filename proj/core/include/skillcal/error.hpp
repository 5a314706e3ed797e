#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace skillcal {

enum class ErrorCode {
  InvalidArgument,
  Io,
  Parse,
  MissingColumn,
  BadSkillValue,
  EmptyFile,
  UnknownCategory,
  NegativeTotal,
  InconsistentMargins,
  MissingGrandTotal,
  NoDonorAvailable,
  UnknownCovariate,
  MissingCellTotal,
  RankDeficient,
  DimensionMismatch,
  SeparationDetected,
  NonConvergence,
  ColumnMismatch,
  MissingCrossTotals,
  UncoveredCell,
  MissingRelSE,
  ReplicateFailure,
  OneClassOnly,
  DegenerateTable,
  InfeasibleDesign,
  Config,
};

std::string_view error_code_name(ErrorCode code) noexcept;

// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  // The message without the code prefix that what() carries.
  const std::string& detail() const noexcept { return detail_; }

private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace skillcal
