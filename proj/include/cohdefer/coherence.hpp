#pragma once
// Auditing action vectors against a handoff contract.
//
// Two views are offered: per-edge classification (one class per parent-child
// pair) and the neighbourhood partition (one class per parent with at least
// one child, first violated predicate wins). The enumeration-based checks
// below certify the definitions and are guarded to small taxonomies.

#include "contract.hpp"
#include "taxonomy.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace cohdefer {

enum class DefectClass : std::uint8_t {
    Coherent = 0,
    TaxonomicContradiction = 1,
    DelegationViolation = 2,
    DeductiveDefect = 3,
};

inline constexpr std::size_t kDefectClassCount = 4;

constexpr std::string_view to_string(DefectClass c) {
    switch (c) {
        case DefectClass::Coherent: return "coherent";
        case DefectClass::TaxonomicContradiction: return "taxonomic_contradiction";
        case DefectClass::DelegationViolation: return "delegation_violation";
        case DefectClass::DeductiveDefect: return "deductive_defect";
    }
    return "?";
}

/// A deferred parent whose child leaves the handed-off responsibility without
/// asserting present: (D, 0) under SSH, or a switch of expert under the
/// same-expert variant. Reported as a delegation violation.
inline bool is_handoff_escape(const Contract& contract, Action parent, Action child) {
    if (!parent.is_defer() || child.is_present()) return false;
    return !contract.admits(parent, child);
}

inline DefectClass classify_edge(const Contract& contract, Action parent, Action child) {
    contract.check(parent);
    contract.check(child);
    if (parent.is_absent() && child.is_present()) return DefectClass::TaxonomicContradiction;
    if (parent.is_defer() && child.is_present()) return DefectClass::DelegationViolation;
    if (parent.is_absent() && child.is_defer()) return DefectClass::DeductiveDefect;
    if (is_handoff_escape(contract, parent, child)) return DefectClass::DelegationViolation;
    return DefectClass::Coherent;
}

inline DefectClass classify_neighbourhood(const Contract& contract, Action parent, std::span<const Action> children) {
    contract.check(parent);
    bool any_present = false;
    bool any_defer = false;
    bool any_escape = false;
    for (Action c : children) {
        contract.check(c);
        any_present = any_present || c.is_present();
        any_defer = any_defer || c.is_defer();
        any_escape = any_escape || is_handoff_escape(contract, parent, c);
    }
    if (parent.is_absent() && any_present) return DefectClass::TaxonomicContradiction;
    if (parent.is_defer() && (any_present || any_escape)) return DefectClass::DelegationViolation;
    if (parent.is_absent() && any_defer) return DefectClass::DeductiveDefect;
    return DefectClass::Coherent;
}

struct EdgeDefect {
    NodeId parent;
    NodeId child;
    DefectClass cls;
    bool handoff_escape = false;
};

struct NeighbourhoodVerdict {
    NodeId parent;
    DefectClass cls;
};

struct AuditReport {
    std::vector<EdgeDefect> edges;
    std::vector<NeighbourhoodVerdict> neighbourhoods;
    std::array<std::size_t, kDefectClassCount> edge_counts{};
    std::array<std::size_t, kDefectClassCount> neighbourhood_counts{};
    bool any_incoherent = false;
    /// Set for contracts whose neighbourhood partition extends the SE template.
    bool extended_semantics = false;

    std::size_t edge_count(DefectClass c) const { return edge_counts[static_cast<std::size_t>(c)]; }
    std::size_t neighbourhood_count(DefectClass c) const {
        return neighbourhood_counts[static_cast<std::size_t>(c)];
    }
};

inline void require_action_vector(const Taxonomy& t, const Contract& contract, std::span<const Action> a) {
    if (a.size() != t.size())
        throw Error(ErrorCode::ActionTaxonomyMismatch,
                    "action vector has " + std::to_string(a.size()) + " entries, taxonomy has " +
                        std::to_string(t.size()) + " nodes");
    for (Action x : a) contract.check(x);
}

inline AuditReport audit(const Taxonomy& t, const Contract& contract, std::span<const Action> a) {
    require_action_vector(t, contract, a);
    AuditReport report;
    report.extended_semantics = contract.extended_semantics();
    report.edges.reserve(t.edges().size());
    for (auto [p, c] : t.edges()) {
        const DefectClass cls = classify_edge(contract, a[p], a[c]);
        report.edges.push_back({p, c, cls, is_handoff_escape(contract, a[p], a[c])});
        ++report.edge_counts[static_cast<std::size_t>(cls)];
        if (cls != DefectClass::Coherent) report.any_incoherent = true;
    }
    std::vector<Action> kids;
    for (NodeId p = 0; p < t.size(); ++p) {
        if (t.is_leaf(p)) continue;
        kids.clear();
        for (NodeId c : t.children(p)) kids.push_back(a[c]);
        const DefectClass cls = classify_neighbourhood(contract, a[p], kids);
        report.neighbourhoods.push_back({p, cls});
        ++report.neighbourhood_counts[static_cast<std::size_t>(cls)];
    }
    return report;
}

inline constexpr std::size_t kMaxEnumerationNodes = 20;

inline void require_enumerable(const Taxonomy& t) {
    if (t.size() > kMaxEnumerationNodes)
        throw Error(ErrorCode::InstanceTooLarge,
                    std::to_string(t.size()) + " nodes exceeds the enumeration guard of " +
                        std::to_string(kMaxEnumerationNodes));
}

/// All upward-closed label vectors agreeing with every non-deferred assertion.
inline std::vector<LabelVector> compatibility_set(const Taxonomy& t, std::span<const Action> a) {
    if (a.size() != t.size())
        throw Error(ErrorCode::ActionTaxonomyMismatch, "action vector does not match taxonomy");
    require_enumerable(t);
    const std::size_t n = t.size();
    std::vector<LabelVector> out;
    LabelVector y(n);
    for (std::uint32_t bits = 0; bits < (std::uint32_t{1} << n); ++bits) {
        bool ok = true;
        for (std::size_t v = 0; v < n && ok; ++v) {
            y[v] = (bits >> v) & 1U;
            if (!a[v].is_defer() && y[v] != a[v].index()) ok = false;
        }
        if (!ok) continue;
        for (auto [p, c] : t.edges())
            if (y[c] && !y[p]) {
                ok = false;
                break;
            }
        if (ok) out.push_back(y);
    }
    return out;
}

struct DeductiveClosure {
    bool closed = true;
    std::optional<NodeId> witness;  // a deferred node whose value is entailed
    std::uint8_t entailed_value = 0;
};

inline DeductiveClosure is_deductively_closed(const Taxonomy& t, std::span<const Action> a) {
    const auto completions = compatibility_set(t, a);
    if (completions.empty())
        throw Error(ErrorCode::UnsatisfiableInput, "no label vector is compatible with the assertions");
    for (NodeId v = 0; v < t.size(); ++v) {
        if (!a[v].is_defer()) continue;
        bool seen[2] = {false, false};
        for (const auto& y : completions) seen[y[v]] = true;
        if (!(seen[0] && seen[1])) return {false, v, static_cast<std::uint8_t>(seen[1] ? 1 : 0)};
    }
    return {};
}

/// Fills deferred nodes from the designated expert's label vector.
/// experts[e - 1] is the vector of expert e.
inline LabelVector complete_system_labels(const Taxonomy& t, std::span<const Action> a,
                                          std::span<const LabelVector> experts) {
    if (a.size() != t.size())
        throw Error(ErrorCode::ActionTaxonomyMismatch, "action vector does not match taxonomy");
    for (std::size_t e = 0; e < experts.size(); ++e) {
        require_label_vector(t, experts[e]);
        if (!is_upward_closed(t, experts[e]))
            throw Error(ErrorCode::ExpertVectorNotClosed,
                        "labels of expert " + std::to_string(e + 1) + " are not upward-closed");
    }
    LabelVector out(t.size());
    for (NodeId v = 0; v < t.size(); ++v) {
        if (!a[v].is_defer()) {
            out[v] = static_cast<std::uint8_t>(a[v].index());
            continue;
        }
        const auto e = static_cast<std::size_t>(a[v].expert());
        if (e > experts.size())
            throw Error(ErrorCode::InvalidExpertIndex, "no labels supplied for expert " + std::to_string(e));
        out[v] = experts[e - 1][v] ? 1 : 0;
    }
    return out;
}

}  // namespace cohdefer
