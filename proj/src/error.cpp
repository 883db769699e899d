#include "flaute/error.hpp"

namespace flaute {

std::string_view error_name(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::MissingFile: return "MissingFile";
        case ErrorCode::MetaMismatch: return "MetaMismatch";
        case ErrorCode::UnitError: return "UnitError";
        case ErrorCode::NonMonotoneAxis: return "NonMonotoneAxis";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::NonDivisibleShape: return "NonDivisibleShape";
        case ErrorCode::AxisMismatch: return "AxisMismatch";
        case ErrorCode::InvalidRoughness: return "InvalidRoughness";
        case ErrorCode::InvalidParams: return "InvalidParams";
        case ErrorCode::DegeneratePolygon: return "DegeneratePolygon";
        case ErrorCode::ZeroResource: return "ZeroResource";
        case ErrorCode::WindowTooLarge: return "WindowTooLarge";
        case ErrorCode::EmptySeries: return "EmptySeries";
        case ErrorCode::InsufficientSpan: return "InsufficientSpan";
        case ErrorCode::EmptySample: return "EmptySample";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::NonFiniteState: return "NonFiniteState";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::InvalidTag: return "InvalidTag";
        case ErrorCode::TooFewMembers: return "TooFewMembers";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::StageMissing: return "StageMissing";
        case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    }
    return "Error";
}

}  // namespace flaute
