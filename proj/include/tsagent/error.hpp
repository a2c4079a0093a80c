#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tsagent {

enum class ErrorCode {
    OutOfBounds,
    AllMissing,
    WindowTooShort,
    ZeroVariance,
    BadParam,
    HasMissing,
    Singular,
    UnknownTool,
    BudgetExceeded,
    Transport,
    RateLimited,
    MalformedResponse,
    CassetteMismatch,
    Io,
    Gateway,
    EmptyFinal,
    BadConfig,
    Shape,
    Schema,
    DegenerateGroup,
    MissingTokenization,
    EmptyOmega,
    ZeroDenominator,
    Parse,
};

/// Wire name of an error code, e.g. "WINDOW_TOO_SHORT".
constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::OutOfBounds: return "OUT_OF_BOUNDS";
        case ErrorCode::AllMissing: return "ALL_MISSING";
        case ErrorCode::WindowTooShort: return "WINDOW_TOO_SHORT";
        case ErrorCode::ZeroVariance: return "ZERO_VARIANCE";
        case ErrorCode::BadParam: return "BAD_PARAM";
        case ErrorCode::HasMissing: return "HAS_MISSING";
        case ErrorCode::Singular: return "SINGULAR";
        case ErrorCode::UnknownTool: return "UNKNOWN_TOOL";
        case ErrorCode::BudgetExceeded: return "BUDGET_EXCEEDED";
        case ErrorCode::Transport: return "TRANSPORT";
        case ErrorCode::RateLimited: return "RATE_LIMITED";
        case ErrorCode::MalformedResponse: return "MALFORMED_RESPONSE";
        case ErrorCode::CassetteMismatch: return "CASSETTE_MISMATCH";
        case ErrorCode::Io: return "IO";
        case ErrorCode::Gateway: return "GATEWAY";
        case ErrorCode::EmptyFinal: return "EMPTY_FINAL";
        case ErrorCode::BadConfig: return "BAD_CONFIG";
        case ErrorCode::Shape: return "SHAPE";
        case ErrorCode::Schema: return "SCHEMA";
        case ErrorCode::DegenerateGroup: return "DEGENERATE_GROUP";
        case ErrorCode::MissingTokenization: return "MISSING_TOKENIZATION";
        case ErrorCode::EmptyOmega: return "EMPTY_OMEGA";
        case ErrorCode::ZeroDenominator: return "ZERO_DENOMINATOR";
        case ErrorCode::Parse: return "PARSE";
    }
    return "UNKNOWN";
}

/// Every failure in the library is reported as an Error carrying a stable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
    if (!condition) fail(code, message);
}

}  // namespace tsagent
