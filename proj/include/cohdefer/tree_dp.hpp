#pragma once
// Exact max-sum dynamic program over contract-coherent action vectors on a
// tree or forest:
//
//   maximise  sum_v node_score(v, a_v) + sum_{v non-root} edge_score(v, a_pa, a_v)
//   s.t.      a_v in Gamma(a_pa(v)) on every edge, a_v in allowed[v].
//
// Ties go to the lowest action index at every node, which yields the
// lexicographically smallest optimum in any parents-first order.

#include "contract.hpp"
#include "taxonomy.hpp"

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace cohdefer {

/// Score of an infeasible DP cell. IEEE -inf absorbs finite additions.
inline constexpr double kInfeasible = -std::numeric_limits<double>::infinity();

struct TreeDpSolution {
    ActionVector actions;
    double value = kInfeasible;  // DP optimum (subtree summation order)
    bool feasible = false;
};

struct NoEdgeScore {
    constexpr double operator()(NodeId, Action, Action) const { return 0.0; }
};

template <class NodeScore, class EdgeScore = NoEdgeScore>
TreeDpSolution solve_tree_dp(const Taxonomy& t, const Contract& contract, std::span<const ActionMask> allowed,
                             NodeScore&& node_score, EdgeScore&& edge_score = {}) {
    t.require_tree("tree dynamic program");
    const std::size_t n = t.size();
    const std::size_t arity = contract.action_count();
    constexpr std::uint8_t kNone = 0xFF;

    std::vector<ActionMask> gamma(arity);
    for (std::size_t i = 0; i < arity; ++i) gamma[i] = contract.admissible_children(Action::from_index(i));

    // best[v * arity + j]: optimum of v's subtree with a_v = j.
    // up[v * arity + i]:   optimum of v's subtree given parent action i.
    std::vector<double> best(n * arity, kInfeasible);
    std::vector<double> up(n * arity, kInfeasible);
    std::vector<std::uint8_t> choice(n * arity, kNone);

    const auto order = t.topo_order();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const NodeId v = *it;
        const ActionMask mask = allowed[v];
        for (std::size_t j = 0; j < arity; ++j) {
            if (!((mask >> j) & 1U)) continue;
            double g = node_score(v, Action::from_index(j));
            for (NodeId u : t.children(v)) g += up[u * arity + j];
            best[v * arity + j] = g;
        }
        if (t.is_root(v)) continue;
        for (std::size_t i = 0; i < arity; ++i) {
            double top = kInfeasible;
            std::uint8_t arg = kNone;
            const ActionMask admissible = gamma[i] & mask;
            for (std::size_t j = 0; j < arity; ++j) {
                if (!((admissible >> j) & 1U)) continue;
                const double b = best[v * arity + j];
                if (b == kInfeasible) continue;
                const double s = edge_score(v, Action::from_index(i), Action::from_index(j)) + b;
                if (arg == kNone || s > top) {
                    if (s == kInfeasible) continue;
                    top = s;
                    arg = static_cast<std::uint8_t>(j);
                }
            }
            up[v * arity + i] = top;
            choice[v * arity + i] = arg;
        }
    }

    TreeDpSolution sol;
    sol.actions.assign(n, Action::absent());
    double total = 0.0;
    for (NodeId r : t.roots()) {
        double top = kInfeasible;
        std::uint8_t arg = kNone;
        for (std::size_t j = 0; j < arity; ++j) {
            const double b = best[r * arity + j];
            if (b == kInfeasible) continue;
            if (arg == kNone || b > top) {
                top = b;
                arg = static_cast<std::uint8_t>(j);
            }
        }
        if (arg == kNone) return sol;
        sol.actions[r] = Action::from_index(arg);
        total += top;
    }
    for (NodeId v : order) {
        if (t.is_root(v)) continue;
        const NodeId p = *t.parent(v);
        const std::uint8_t arg = choice[v * arity + sol.actions[p].index()];
        if (arg == kNone) return sol;
        sol.actions[v] = Action::from_index(arg);
    }
    sol.value = total;
    sol.feasible = true;
    return sol;
}

}  // namespace cohdefer
