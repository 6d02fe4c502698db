#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace eqport {

enum class ErrorCode {
    ParseError,
    SingularSigma,
    GridError,
    DimensionMismatch,
    RangeError,
    NoSolution,
    ZeroTheta,
    DegenerateDenominator,
    NoTerminalLimit,
    UtilityMismatch,
    PreconditionViolated,
    NonFiniteState,
    MissingIncrements,
    HorizonError,
    NonAdmissible,
};

std::string_view error_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& detail)
        : std::runtime_error(std::string(error_name(code)) + ": " + detail), code_(code)
    {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace eqport
