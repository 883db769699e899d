#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace flaute {

/// Error categories. The numeric value doubles as the CLI exit code.
enum class ErrorCode : int {
    InvalidArgument = 2,
    MissingFile = 3,
    MetaMismatch = 4,
    UnitError = 5,
    NonMonotoneAxis = 6,
    IoError = 7,
    NonDivisibleShape = 8,
    AxisMismatch = 9,
    InvalidRoughness = 10,
    InvalidParams = 11,
    DegeneratePolygon = 12,
    ZeroResource = 13,
    WindowTooLarge = 14,
    EmptySeries = 15,
    InsufficientSpan = 16,
    EmptySample = 17,
    NonFiniteLoss = 18,
    NonFiniteState = 19,
    ShapeMismatch = 20,
    InvalidTag = 21,
    TooFewMembers = 22,
    ParseError = 23,
    StageMissing = 24,
    NonFiniteValue = 25,
};

std::string_view error_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace flaute
