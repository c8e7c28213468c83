#pragma once
// Ternary (or expert-indexed) handoff actions and the contracts that decide
// which child actions a parent action admits.

#include "error.hpp"

#include <bit>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace cohdefer {

/// One node's action. Index layout: 0 = assert absent, 1 = assert present,
/// 1 + e = defer to expert e (e >= 1). Single-expert deferral is expert 1.
class Action {
public:
    constexpr Action() = default;

    static constexpr Action absent() { return Action(0); }
    static constexpr Action present() { return Action(1); }
    static constexpr Action defer(int expert = 1) { return Action(static_cast<std::uint8_t>(1 + expert)); }
    static constexpr Action from_index(std::size_t index) { return Action(static_cast<std::uint8_t>(index)); }

    constexpr std::size_t index() const { return index_; }
    constexpr bool is_absent() const { return index_ == 0; }
    constexpr bool is_present() const { return index_ == 1; }
    constexpr bool is_defer() const { return index_ >= 2; }
    /// Expert index for deferrals, 0 for assertions.
    constexpr int expert() const { return is_defer() ? index_ - 1 : 0; }

    constexpr auto operator<=>(const Action&) const = default;

private:
    constexpr explicit Action(std::uint8_t index) : index_(index) {}
    std::uint8_t index_ = 0;
};

using ActionVector = std::vector<Action>;

/// Bit i set <=> action with index i allowed.
using ActionMask = std::uint32_t;

constexpr ActionMask mask_of(Action a) { return ActionMask{1} << a.index(); }
constexpr bool mask_contains(ActionMask m, Action a) { return (m >> a.index()) & 1U; }
constexpr std::size_t mask_size(ActionMask m) { return static_cast<std::size_t>(std::popcount(m)); }

/// "0", "1", "D" for single-expert contracts, "D1".."DE" otherwise.
inline std::string to_string(Action a, int experts = 1) {
    if (a.is_absent()) return "0";
    if (a.is_present()) return "1";
    if (experts <= 1) return "D";
    return "D" + std::to_string(a.expert());
}

enum class ContractKind { SelectiveExclusion, StrongSubtreeHandoff, MultiExpert };

class Contract {
public:
    static constexpr int kMaxExperts = 29;

    static Contract selective_exclusion() { return Contract(ContractKind::SelectiveExclusion, 1, false); }
    static Contract strong_subtree_handoff() { return Contract(ContractKind::StrongSubtreeHandoff, 1, false); }
    /// Expert-agnostic unless same_expert is set (experimental stricter variant).
    static Contract multi_expert(int experts, bool same_expert = false) {
        if (experts < 1 || experts > kMaxExperts)
            throw Error(ErrorCode::InvalidExpertIndex, "expert count must be in [1, 29]");
        return Contract(ContractKind::MultiExpert, experts, same_expert);
    }

    ContractKind kind() const noexcept { return kind_; }
    int experts() const noexcept { return experts_; }
    bool same_expert() const noexcept { return same_expert_; }
    std::size_t action_count() const noexcept { return 2 + static_cast<std::size_t>(experts_); }
    bool is_strong_subtree() const noexcept { return kind_ == ContractKind::StrongSubtreeHandoff; }
    /// True when classification extends beyond the SE edge patterns.
    bool extended_semantics() const noexcept {
        return kind_ == ContractKind::StrongSubtreeHandoff || (kind_ == ContractKind::MultiExpert && same_expert_);
    }

    bool is_valid(Action a) const noexcept { return a.index() < action_count(); }

    void check(Action a) const {
        if (!is_valid(a))
            throw Error(ErrorCode::InvalidExpertIndex,
                        "action index " + std::to_string(a.index()) + " outside contract with " +
                            std::to_string(experts_) + " expert(s)");
    }

    ActionMask all_actions() const noexcept { return (ActionMask{1} << action_count()) - 1; }
    ActionMask assert_actions() const noexcept { return 0b11; }
    ActionMask defer_actions() const noexcept { return all_actions() & ~assert_actions(); }

    /// Gamma(parent): the child actions admissible under this contract.
    ActionMask admissible_children(Action parent) const {
        check(parent);
        if (parent.is_absent()) return mask_of(Action::absent());
        if (parent.is_present()) return all_actions();
        switch (kind_) {
            case ContractKind::SelectiveExclusion:
                return mask_of(Action::absent()) | mask_of(Action::defer());
            case ContractKind::StrongSubtreeHandoff:
                return mask_of(Action::defer());
            case ContractKind::MultiExpert:
                if (same_expert_) return mask_of(Action::absent()) | mask_of(parent);
                return mask_of(Action::absent()) | defer_actions();
        }
        return 0;
    }

    bool admits(Action parent, Action child) const {
        check(child);
        return mask_contains(admissible_children(parent), child);
    }

    std::string name() const {
        switch (kind_) {
            case ContractKind::SelectiveExclusion: return "se";
            case ContractKind::StrongSubtreeHandoff: return "ssh";
            case ContractKind::MultiExpert:
                return "me" + std::to_string(experts_) + (same_expert_ ? "-same" : "");
        }
        return "?";
    }

private:
    Contract(ContractKind kind, int experts, bool same_expert)
        : kind_(kind), experts_(experts), same_expert_(same_expert) {}

    ContractKind kind_;
    int experts_;
    bool same_expert_;
};

inline std::vector<Action> actions_in(ActionMask m) {
    std::vector<Action> out;
    for (std::size_t i = 0; m >> i; ++i)
        if ((m >> i) & 1U) out.push_back(Action::from_index(i));
    return out;
}

inline std::vector<Action> admissible_child_actions(const Contract& contract, Action parent) {
    return actions_in(contract.admissible_children(parent));
}

}  // namespace cohdefer
