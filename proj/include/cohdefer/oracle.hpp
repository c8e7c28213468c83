#pragma once
// Brute-force references for tests. Nothing here calls the dynamic
// program or Contract::admissible_children; the admissibility relation is
// restated from scratch so the two implementations can disagree.

#include "contract.hpp"
#include "error.hpp"
#include "taxonomy.hpp"

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace cohdefer::oracle {

inline constexpr std::size_t kMaxVectors = 1'000'000;

/// Child action j admissible under parent action i (indices 0, 1, 1 + e).
inline bool admissible(const Contract& c, std::size_t parent, std::size_t child) {
    if (parent == 0) return child == 0;
    if (parent == 1) return true;
    switch (c.kind()) {
        case ContractKind::SelectiveExclusion: return child == 0 || child == 2;
        case ContractKind::StrongSubtreeHandoff: return child == 2;
        case ContractKind::MultiExpert:
            if (child == 0) return true;
            if (child < 2) return false;
            return !c.same_expert() || child == parent;
    }
    return false;
}

/// Coherent iff every node's action is admissible under every parent's action.
inline bool coherent(const Taxonomy& t, const Contract& c, std::span<const Action> a) {
    for (NodeId v = 0; v < t.size(); ++v)
        for (NodeId p : t.parents(v))
            if (!admissible(c, a[p].index(), a[v].index())) return false;
    return true;
}

inline std::size_t vector_count(const Taxonomy& t, const Contract& c) {
    std::size_t total = 1;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (total > kMaxVectors / c.action_count())
            throw Error(ErrorCode::InstanceTooLarge, "enumeration exceeds " + std::to_string(kMaxVectors) + " vectors");
        total *= c.action_count();
    }
    return total;
}

/// Calls f on every action vector in lexicographic order over node index.
template <class F>
void for_each_vector(const Taxonomy& t, const Contract& c, F&& f) {
    const std::size_t total = vector_count(t, c);
    const std::size_t base = c.action_count();
    ActionVector a(t.size(), Action::absent());
    for (std::size_t k = 0; k < total; ++k) {
        std::size_t rem = k;
        for (std::size_t v = t.size(); v-- > 0;) {
            a[v] = Action::from_index(rem % base);
            rem /= base;
        }
        f(static_cast<const ActionVector&>(a));
    }
}

/// All coherent vectors, lexicographic over node index.
inline std::vector<ActionVector> enumerate_coherent_set(const Taxonomy& t, const Contract& c) {
    std::vector<ActionVector> out;
    for_each_vector(t, c, [&](const ActionVector& a) {
        if (coherent(t, c, a)) out.push_back(a);
    });
    return out;
}

struct BruteResult {
    ActionVector actions;
    double value = 0.0;
};

/// a precedes b in lexicographic order along the given node order.
inline bool lex_less(std::span<const Action> a, std::span<const Action> b, std::span<const NodeId> order) {
    for (NodeId v : order) {
        if (a[v].index() != b[v].index()) return a[v].index() < b[v].index();
    }
    return false;
}

enum class Sense { Maximise, Minimise };

/// Exhaustive optimum of objective over coherent vectors, optionally
/// restricted per node by `allowed` (bit j admits action j). Ties go to the
/// vector that is lexicographically smallest along t.topo_order().
/// Vectors with a NaN or -inf (maximise) / +inf (minimise) objective are infeasible.
inline BruteResult brute_optimum(const Taxonomy& t, const Contract& c,
                                 const std::function<double(std::span<const Action>)>& objective,
                                 std::span<const ActionMask> allowed = {}, Sense sense = Sense::Maximise) {
    std::optional<BruteResult> best;
    const auto order = t.topo_order();
    for_each_vector(t, c, [&](const ActionVector& a) {
        if (!allowed.empty())
            for (NodeId v = 0; v < t.size(); ++v)
                if (!((allowed[v] >> a[v].index()) & 1U)) return;
        if (!coherent(t, c, a)) return;
        const double s = objective(a);
        if (std::isnan(s)) return;
        if (sense == Sense::Maximise ? s == -INFINITY : s == INFINITY) return;
        const bool better = !best || (sense == Sense::Maximise ? s > best->value : s < best->value) ||
                            (s == best->value && lex_less(a, best->actions, order));
        if (better) best = BruteResult{a, s};
    });
    if (!best) throw Error(ErrorCode::EmptyFeasibleSet, "no coherent vector satisfies the restriction");
    return *best;
}

/// Exhaustive argmax of sum_v scores[v][a_v] (summed in node-index order).
/// `scores` is row-major, one row of action_count() entries per node.
inline BruteResult brute_map(const Taxonomy& t, const Contract& c, std::span<const double> scores,
                             std::span<const ActionMask> allowed = {}, Sense sense = Sense::Maximise) {
    const std::size_t n = c.action_count();
    if (scores.size() != t.size() * n) throw Error(ErrorCode::ShapeMismatch, "score table has the wrong size");
    auto objective = [&](std::span<const Action> a) {
        double s = 0.0;
        for (std::size_t v = 0; v < a.size(); ++v) s += scores[v * n + a[v].index()];
        return s;
    };
    return brute_optimum(t, c, objective, allowed, sense);
}

/// Smallest superset of raw (by size, then lexicographic membership) whose
/// budget mask admits a coherent vector. Nodes in the set must defer, all
/// other nodes must assert.
inline std::vector<NodeId> brute_closure(const Taxonomy& t, const Contract& c, std::span<const NodeId> raw) {
    const std::size_t n = t.size();
    if (n > 20) throw Error(ErrorCode::InstanceTooLarge, "subset search limited to 20 nodes");
    std::uint32_t raw_bits = 0;
    for (NodeId v : raw) raw_bits |= 1U << v;
    ActionMask defer_mask = 0, assert_mask = 0b11;
    for (std::size_t a = 2; a < c.action_count(); ++a) defer_mask |= 1U << a;

    auto feasible = [&](std::uint32_t bits) {
        // Top-down search for any coherent vector under the mask.
        std::vector<ActionMask> allowed(n);
        for (NodeId v = 0; v < n; ++v) allowed[v] = ((bits >> v) & 1U) ? defer_mask : assert_mask;
        bool found = false;
        for_each_vector(t, c, [&](const ActionVector& a) {
            if (found) return;
            for (NodeId v = 0; v < n; ++v)
                if (!((allowed[v] >> a[v].index()) & 1U)) return;
            if (coherent(t, c, a)) found = true;
        });
        return found;
    };

    std::optional<std::uint32_t> best;
    auto popcount = [](std::uint32_t x) { return static_cast<std::size_t>(__builtin_popcount(x)); };
    for (std::uint32_t bits = 0; bits < (1U << n); ++bits) {
        if ((bits & raw_bits) != raw_bits) continue;
        if (best && popcount(bits) >= popcount(*best)) continue;
        if (feasible(bits)) best = bits;
    }
    if (!best) throw Error(ErrorCode::EmptyFeasibleSet, "no feasible defer superset");
    std::vector<NodeId> out;
    for (NodeId v = 0; v < n; ++v)
        if ((*best >> v) & 1U) out.push_back(v);
    return out;
}

/// All feasible supersets of raw with minimum cardinality.
inline std::vector<std::vector<NodeId>> brute_minimal_closures(const Taxonomy& t, const Contract& c,
                                                               std::span<const NodeId> raw) {
    const auto first = brute_closure(t, c, raw);
    const std::size_t n = t.size();
    std::uint32_t raw_bits = 0;
    for (NodeId v : raw) raw_bits |= 1U << v;
    std::vector<std::vector<NodeId>> out;
    for (std::uint32_t bits = 0; bits < (1U << n); ++bits) {
        if ((bits & raw_bits) != raw_bits) continue;
        if (static_cast<std::size_t>(__builtin_popcount(bits)) != first.size()) continue;
        std::vector<NodeId> s;
        for (NodeId v = 0; v < n; ++v)
            if ((bits >> v) & 1U) s.push_back(v);
        ActionMask defer_mask = 0;
        for (std::size_t a = 2; a < c.action_count(); ++a) defer_mask |= 1U << a;
        std::vector<ActionMask> allowed(n, 0b11);
        for (NodeId v : s) allowed[v] = defer_mask;
        bool found = false;
        for_each_vector(t, c, [&](const ActionVector& a) {
            if (found) return;
            for (NodeId v = 0; v < n; ++v)
                if (!((allowed[v] >> a[v].index()) & 1U)) return;
            if (coherent(t, c, a)) found = true;
        });
        if (found) out.push_back(std::move(s));
    }
    return out;
}

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h per coordinate.
inline std::vector<double> finite_difference(const std::function<double(std::span<const double>)>& f,
                                             std::span<const double> point, double step = 1e-5) {
    std::vector<double> x(point.begin(), point.end());
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + step;
        const double up = f(x);
        x[i] = saved - step;
        const double down = f(x);
        x[i] = saved;
        if (!std::isfinite(up) || !std::isfinite(down))
            throw Error(ErrorCode::NonFiniteValue, "objective is not finite near coordinate " + std::to_string(i));
        grad[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

/// max_i |a_i - b_i| / max(1, |a_i|, |b_i|).
inline double max_relative_error(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw Error(ErrorCode::ShapeMismatch, "gradient sizes differ");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max({1.0, std::abs(a[i]), std::abs(b[i])});
        worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
    }
    return worst;
}

}  // namespace cohdefer::oracle
