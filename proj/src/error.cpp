#include "qlcontrol/error.hpp"

namespace qlc {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::RegionUnsupported: return "RegionUnsupported";
        case ErrorKind::GridTooCoarse: return "GridTooCoarse";
        case ErrorKind::TimeNodeOnBoundary: return "TimeNodeOnBoundary";
        case ErrorKind::NonpositiveCoefficient: return "NonpositiveCoefficient";
        case ErrorKind::BadExponent: return "BadExponent";
        case ErrorKind::IntervalOutsideRange: return "IntervalOutsideRange";
        case ErrorKind::NewtonDiverged: return "NewtonDiverged";
        case ErrorKind::LinearSolveStalled: return "LinearSolveStalled";
        case ErrorKind::MaxIterations: return "MaxIterations";
        case ErrorKind::BadExponents: return "BadExponents";
        case ErrorKind::NoConvergence: return "NoConvergence";
        case ErrorKind::FitDegenerate: return "FitDegenerate";
        case ErrorKind::ConfigInvalid: return "ConfigInvalid";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::DiagnosticViolation: return "DiagnosticViolation";
        case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

}  // namespace qlc
