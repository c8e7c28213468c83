#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cohdefer {

enum class ErrorCode {
    CycleDetected,
    DuplicateNode,
    UnknownParent,
    UnknownNode,
    EmptyTaxonomy,
    ReservedName,
    InvalidExpertIndex,
    ActionTaxonomyMismatch,
    InstanceTooLarge,
    UnsatisfiableInput,
    ExpertVectorNotClosed,
    DagUnsupported,
    InfeasibleBudgetMask,
    InvalidDistribution,
    InvalidRisk,
    ShapeMismatch,
    DivergenceDetected,
    NonFiniteValue,
    EmptyFeasibleSet,
    ParseError,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::CycleDetected: return "CycleDetected";
        case ErrorCode::DuplicateNode: return "DuplicateNode";
        case ErrorCode::UnknownParent: return "UnknownParent";
        case ErrorCode::UnknownNode: return "UnknownNode";
        case ErrorCode::EmptyTaxonomy: return "EmptyTaxonomy";
        case ErrorCode::ReservedName: return "ReservedName";
        case ErrorCode::InvalidExpertIndex: return "InvalidExpertIndex";
        case ErrorCode::ActionTaxonomyMismatch: return "ActionTaxonomyMismatch";
        case ErrorCode::InstanceTooLarge: return "InstanceTooLarge";
        case ErrorCode::UnsatisfiableInput: return "UnsatisfiableInput";
        case ErrorCode::ExpertVectorNotClosed: return "ExpertVectorNotClosed";
        case ErrorCode::DagUnsupported: return "DagUnsupported";
        case ErrorCode::InfeasibleBudgetMask: return "InfeasibleBudgetMask";
        case ErrorCode::InvalidDistribution: return "InvalidDistribution";
        case ErrorCode::InvalidRisk: return "InvalidRisk";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::DivergenceDetected: return "DivergenceDetected";
        case ErrorCode::NonFiniteValue: return "NonFiniteValue";
        case ErrorCode::EmptyFeasibleSet: return "EmptyFeasibleSet";
        case ErrorCode::ParseError: return "ParseError";
    }
    return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace cohdefer
