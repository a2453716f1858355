#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qlc {

enum class ErrorKind {
    RegionUnsupported,
    GridTooCoarse,
    TimeNodeOnBoundary,
    NonpositiveCoefficient,
    BadExponent,
    IntervalOutsideRange,
    NewtonDiverged,
    LinearSolveStalled,
    MaxIterations,
    BadExponents,
    NoConvergence,
    FitDegenerate,
    ConfigInvalid,
    InvalidArgument,
    DiagnosticViolation,
    IoError,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace qlc
