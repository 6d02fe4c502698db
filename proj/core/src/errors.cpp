#include "eqport/errors.hpp"

namespace eqport {

std::string_view error_name(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SingularSigma: return "SingularSigma";
    case ErrorCode::GridError: return "GridError";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::RangeError: return "RangeError";
    case ErrorCode::NoSolution: return "NoSolution";
    case ErrorCode::ZeroTheta: return "ZeroTheta";
    case ErrorCode::DegenerateDenominator: return "DegenerateDenominator";
    case ErrorCode::NoTerminalLimit: return "NoTerminalLimit";
    case ErrorCode::UtilityMismatch: return "UtilityMismatch";
    case ErrorCode::PreconditionViolated: return "PreconditionViolated";
    case ErrorCode::NonFiniteState: return "NonFiniteState";
    case ErrorCode::MissingIncrements: return "MissingIncrements";
    case ErrorCode::HorizonError: return "HorizonError";
    case ErrorCode::NonAdmissible: return "NonAdmissible";
    }
    return "Unknown";
}

} // namespace eqport
