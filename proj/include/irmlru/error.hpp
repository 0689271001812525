#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace irmlru {

enum class ErrorCode {
    NonPositiveEntry,
    BadLength,
    SumOutOfTolerance,
    ThetaOutOfRange,
    MOutOfRange,
    CapacityOutOfRange,
    CapacityFull,
    TooManyItems,
    TooManyItemsForOracle,
    BadPair,
    RankOutOfRange,
    QuadratureNotConverged,
    ProbOutOfRange,
    NotAPermutation,
    NonPositiveKernel,
    NumericalError,
    BadArgument,
};

constexpr std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::NonPositiveEntry: return "NonPositiveEntry";
    case ErrorCode::BadLength: return "BadLength";
    case ErrorCode::SumOutOfTolerance: return "SumOutOfTolerance";
    case ErrorCode::ThetaOutOfRange: return "ThetaOutOfRange";
    case ErrorCode::MOutOfRange: return "MOutOfRange";
    case ErrorCode::CapacityOutOfRange: return "CapacityOutOfRange";
    case ErrorCode::CapacityFull: return "CapacityFull";
    case ErrorCode::TooManyItems: return "TooManyItems";
    case ErrorCode::TooManyItemsForOracle: return "TooManyItemsForOracle";
    case ErrorCode::BadPair: return "BadPair";
    case ErrorCode::RankOutOfRange: return "RankOutOfRange";
    case ErrorCode::QuadratureNotConverged: return "QuadratureNotConverged";
    case ErrorCode::ProbOutOfRange: return "ProbOutOfRange";
    case ErrorCode::NotAPermutation: return "NotAPermutation";
    case ErrorCode::NonPositiveKernel: return "NonPositiveKernel";
    case ErrorCode::NumericalError: return "NumericalError";
    case ErrorCode::BadArgument: return "BadArgument";
    }
    return "Unknown";
}

/// Every engine failure is reported through this type; `code()` is stable and
/// meant for programmatic handling, `what()` for humans.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message)
        , code_(code)
    {
    }

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace irmlru
