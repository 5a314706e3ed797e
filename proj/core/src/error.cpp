#include "skillcal/error.hpp"

namespace skillcal {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Parse: return "Parse";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::BadSkillValue: return "BadSkillValue";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::UnknownCategory: return "UnknownCategory";
    case ErrorCode::NegativeTotal: return "NegativeTotal";
    case ErrorCode::InconsistentMargins: return "InconsistentMargins";
    case ErrorCode::MissingGrandTotal: return "MissingGrandTotal";
    case ErrorCode::NoDonorAvailable: return "NoDonorAvailable";
    case ErrorCode::UnknownCovariate: return "UnknownCovariate";
    case ErrorCode::MissingCellTotal: return "MissingCellTotal";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SeparationDetected: return "SeparationDetected";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::ColumnMismatch: return "ColumnMismatch";
    case ErrorCode::MissingCrossTotals: return "MissingCrossTotals";
    case ErrorCode::UncoveredCell: return "UncoveredCell";
    case ErrorCode::MissingRelSE: return "MissingRelSE";
    case ErrorCode::ReplicateFailure: return "ReplicateFailure";
    case ErrorCode::OneClassOnly: return "OneClassOnly";
    case ErrorCode::DegenerateTable: return "DegenerateTable";
    case ErrorCode::InfeasibleDesign: return "InfeasibleDesign";
    case ErrorCode::Config: return "Config";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code), detail_(message) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace skillcal
