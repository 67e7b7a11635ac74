#pragma once

#include <stdexcept>
#include <string>

namespace kamred {

/// Failure categories surfaced by the engine. Each maps onto one of the
/// contract-level error signals of the public operations.
enum class ErrorKind {
    InvalidArgument,
    Singular,
    OutsideRegime,
    Divergent,
    Defective,
    MultipleResonances,
    AssertionFailure,
    PreconditionFailure,
    ScheduleViolation,
    NoFeasibleEpsilon,
    StepTooLarge,
    Parse,
};

[[nodiscard]] constexpr const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::Singular: return "Singular";
        case ErrorKind::OutsideRegime: return "OutsideRegime";
        case ErrorKind::Divergent: return "Divergent";
        case ErrorKind::Defective: return "Defective";
        case ErrorKind::MultipleResonances: return "MultipleResonances";
        case ErrorKind::AssertionFailure: return "AssertionFailure";
        case ErrorKind::PreconditionFailure: return "PreconditionFailure";
        case ErrorKind::ScheduleViolation: return "ScheduleViolation";
        case ErrorKind::NoFeasibleEpsilon: return "NoFeasibleEpsilon";
        case ErrorKind::StepTooLarge: return "StepTooLarge";
        case ErrorKind::Parse: return "Parse";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline void require(bool condition, const std::string& what) {
    if (!condition) throw Error(ErrorKind::InvalidArgument, what);
}

}  // namespace kamred
