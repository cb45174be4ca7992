#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace floodsense {

enum class ErrorCode {
    TypeMismatch,
    OutsideDisasterArea,
    BeforeEpoch,
    InvalidSchema,
    InvalidReport,
    InvalidGrid,
    EmptyInput,
    MissingStats,
    UnknownUser,
    UnknownRegion,
    DuplicateUser,
    BlacklistedUser,
    InvariantViolation,
    StorageFailure,
    CorruptLog,
    InvalidScenario,
    InvalidConfig,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::TypeMismatch: return "TypeMismatch";
        case ErrorCode::OutsideDisasterArea: return "OutsideDisasterArea";
        case ErrorCode::BeforeEpoch: return "BeforeEpoch";
        case ErrorCode::InvalidSchema: return "InvalidSchema";
        case ErrorCode::InvalidReport: return "InvalidReport";
        case ErrorCode::InvalidGrid: return "InvalidGrid";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::MissingStats: return "MissingStats";
        case ErrorCode::UnknownUser: return "UnknownUser";
        case ErrorCode::UnknownRegion: return "UnknownRegion";
        case ErrorCode::DuplicateUser: return "DuplicateUser";
        case ErrorCode::BlacklistedUser: return "BlacklistedUser";
        case ErrorCode::InvariantViolation: return "InvariantViolation";
        case ErrorCode::StorageFailure: return "StorageFailure";
        case ErrorCode::CorruptLog: return "CorruptLog";
        case ErrorCode::InvalidScenario: return "InvalidScenario";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// that callers (HTTP layer, CLI) can map it to a status or exit code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Raised by log replay; remembers the 1-based line that failed to parse.
class CorruptLogError : public Error {
public:
    CorruptLogError(std::size_t line, const std::string& message)
        : Error(ErrorCode::CorruptLog, "line " + std::to_string(line) + ": " + message), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace floodsense
