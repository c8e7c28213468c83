#pragma once
// Exact decoders over the contract-coherent action set, plus the two
// non-guaranteed baselines (nodewise argmax and fast marginal decoding).
//
// Every exact decoder reduces to solve_tree_dp with a different score:
//   projection       sum_v log eta_v(a_v)
//   TBP exact MAP    log eta_r(a_r) + sum_v log T_v[a_pa, a_v]
//   Bayes coherent   -sum_v rho_v(a_v)
// Reported scores are re-summed over the chosen vector in node-index order.

#include "coherence.hpp"
#include "contract.hpp"
#include "taxonomy.hpp"
#include "tbp.hpp"
#include "tree_dp.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

namespace cohdefer {

/// Per-node action risks rho_v(a). Entries must be finite and nonnegative.
class RiskTable {
public:
    RiskTable() = default;
    explicit RiskTable(ActionTable table) : table_(std::move(table)) {
        if (table_.arity() < 3) throw Error(ErrorCode::ShapeMismatch, "risk rows need at least 3 actions");
        for (double x : table_.data())
            if (!std::isfinite(x) || x < 0.0) throw Error(ErrorCode::InvalidRisk, "risks must be finite and >= 0");
    }

    struct NodeModel {
        double weight = 1.0;             // w_v
        double p_present = 0.5;          // P(Y_v = 1 | x)
        std::vector<double> expert_error;  // P(M_{v,e} != Y_v | x), one per expert
        std::vector<double> defer_cost;    // lambda_{v,e}, one per expert
    };

    /// rho(0) = w P(Y=1), rho(1) = w P(Y=0), rho(D_e) = w (P(M_e != Y) + lambda_e).
    static RiskTable from_models(std::span<const NodeModel> nodes) {
        if (nodes.empty()) throw Error(ErrorCode::ShapeMismatch, "no nodes");
        const std::size_t experts = nodes.front().expert_error.size();
        if (experts == 0) throw Error(ErrorCode::ShapeMismatch, "at least one expert is required");
        ActionTable t(nodes.size(), 2 + experts);
        for (std::size_t v = 0; v < nodes.size(); ++v) {
            const auto& m = nodes[v];
            if (m.expert_error.size() != experts || m.defer_cost.size() != experts)
                throw Error(ErrorCode::ShapeMismatch, "inconsistent expert count at node " + std::to_string(v));
            t.at(v, 0) = m.weight * m.p_present;
            t.at(v, 1) = m.weight * (1.0 - m.p_present);
            for (std::size_t e = 0; e < experts; ++e)
                t.at(v, 2 + e) = m.weight * (m.expert_error[e] + m.defer_cost[e]);
        }
        return RiskTable(std::move(t));
    }

    std::size_t rows() const noexcept { return table_.rows(); }
    std::size_t arity() const noexcept { return table_.arity(); }
    std::span<const double> row(NodeId v) const { return table_.row(v); }
    double at(NodeId v, Action a) const { return table_.at(v, a.index()); }
    const ActionTable& table() const noexcept { return table_; }

private:
    ActionTable table_;
};

struct MapDecode {
    ActionVector actions;
    double score = kInfeasible;
};

struct RiskDecode {
    ActionVector actions;
    double risk = 0.0;
};

struct AuditedDecode {
    ActionVector actions;
    AuditReport audit;
};

namespace detail {

inline ActionTable log_table(const PrimitiveTable& eta) {
    ActionTable out(eta.rows(), eta.arity());
    for (std::size_t v = 0; v < eta.rows(); ++v)
        for (std::size_t a = 0; a < eta.arity(); ++a) out.at(v, a) = std::log(eta.table().at(v, a));
    return out;
}

inline std::vector<ActionMask> budget_masks(const Taxonomy& t, const Contract& c, std::span<const NodeId> defer_set) {
    std::vector<ActionMask> masks(t.size(), c.assert_actions());
    for (NodeId v : defer_set) {
        if (v >= t.size()) throw Error(ErrorCode::UnknownNode, "defer set names node " + std::to_string(v));
        masks[v] = c.defer_actions();
    }
    return masks;
}

inline double sum_in_node_order(const ActionTable& scores, std::span<const Action> a) {
    double s = 0.0;
    for (std::size_t v = 0; v < a.size(); ++v) s += scores.at(v, a[v].index());
    return s;
}

struct TbpScores {
    ActionTable root_log;                      // log eta for roots
    std::vector<std::vector<double>> edge_log;  // log T_v flattened, per non-root node
};

inline TbpScores tbp_scores(const Taxonomy& t, const Contract& c, const PrimitiveTable& eta) {
    const std::size_t n = c.action_count();
    TbpScores s{log_table(eta), std::vector<std::vector<double>>(t.size())};
    for (NodeId v = 0; v < t.size(); ++v) {
        if (t.is_root(v)) continue;
        const TransitionKernel k = build_kernel(c, eta.row(v));
        auto& e = s.edge_log[v];
        e.resize(n * n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) e[i * n + j] = std::log(k(i, j));
    }
    return s;
}

inline double tbp_log_score(const Taxonomy& t, const Contract& c, const TbpScores& s, std::span<const Action> a) {
    const std::size_t n = c.action_count();
    double total = 0.0;
    for (NodeId v = 0; v < t.size(); ++v) {
        if (t.is_root(v))
            total += s.root_log.at(v, a[v].index());
        else
            total += s.edge_log[v][a[*t.parent(v)].index() * n + a[v].index()];
    }
    return total;
}

inline MapDecode decode_log_primitives(const Taxonomy& t, const Contract& c, const ActionTable& logs,
                                       std::span<const ActionMask> masks) {
    auto sol = solve_tree_dp(t, c, masks, [&](NodeId v, Action a) { return logs.at(v, a.index()); });
    if (!sol.feasible) return {};
    return {sol.actions, sum_in_node_order(logs, sol.actions)};
}

inline MapDecode decode_tbp(const Taxonomy& t, const Contract& c, const TbpScores& s,
                            std::span<const ActionMask> masks) {
    const std::size_t n = c.action_count();
    auto sol = solve_tree_dp(
        t, c, masks,
        [&](NodeId v, Action a) { return t.is_root(v) ? s.root_log.at(v, a.index()) : 0.0; },
        [&](NodeId v, Action parent, Action child) { return s.edge_log[v][parent.index() * n + child.index()]; });
    if (!sol.feasible) return {};
    return {sol.actions, tbp_log_score(t, c, s, sol.actions)};
}

/// Per-node argmax: deferred nodes take the best defer action, others the
/// best assertion. Lowest index wins ties.
inline ActionVector clamped_argmax(const ActionTable& values, const Contract& c, std::span<const NodeId> defer_set) {
    std::vector<std::uint8_t> deferred(values.rows(), 0);
    for (NodeId v : defer_set) deferred.at(v) = 1;
    ActionVector out(values.rows());
    for (NodeId v = 0; v < values.rows(); ++v) {
        const ActionMask m = deferred[v] ? c.defer_actions() : c.assert_actions();
        std::size_t arg = 0;
        bool found = false;
        for (std::size_t a = 0; a < values.arity(); ++a) {
            if (!((m >> a) & 1U)) continue;
            if (!found || values.at(v, a) > values.at(v, arg)) {
                arg = a;
                found = true;
            }
        }
        out[v] = Action::from_index(arg);
    }
    return out;
}

}  // namespace detail

/// Coherent MAP projection of the local primitives.
inline MapDecode project_map(const Taxonomy& t, const Contract& c, const PrimitiveTable& eta) {
    t.require_tree("project_map");
    require_primitives(t, c, eta);
    const std::vector<ActionMask> masks(t.size(), c.all_actions());
    return detail::decode_log_primitives(t, c, detail::log_table(eta), masks);
}

/// V_target(a*) for every action a*: best coherent log-score with a_target
/// clamped to a*, kInfeasible when no coherent vector has that action.
inline std::vector<double> action_scores(const Taxonomy& t, const Contract& c, const PrimitiveTable& eta,
                                         NodeId target) {
    t.require_tree("action_scores");
    require_primitives(t, c, eta);
    if (target >= t.size()) throw Error(ErrorCode::UnknownNode, "target node out of range");
    const ActionTable logs = detail::log_table(eta);
    std::vector<ActionMask> masks(t.size(), c.all_actions());
    std::vector<double> out(c.action_count(), kInfeasible);
    for (std::size_t a = 0; a < c.action_count(); ++a) {
        masks[target] = mask_of(Action::from_index(a));
        out[a] = detail::decode_log_primitives(t, c, logs, masks).score;
    }
    return out;
}

/// action_scores for every node, one re-decode per (node, action) pair.
inline ActionTable action_score_table(const Taxonomy& t, const Contract& c, const PrimitiveTable& eta) {
    ActionTable out(t.size(), c.action_count());
    for (NodeId v = 0; v < t.size(); ++v) {
        const auto s = action_scores(t, c, eta, v);
        std::copy(s.begin(), s.end(), out.row(v).begin());
    }
    return out;
}

struct DeferPriority {
    double score = 0.0;
    int expert = 1;  // expert achieving the best defer value
};

/// r(D) - max(r(0), r(1)), with r(D) = max over experts (first expert on ties).
inline DeferPriority defer_priority(std::span<const double> r) {
    if (r.size() < 3) throw Error(ErrorCode::ShapeMismatch, "ranking vector needs at least 3 entries");
    std::size_t best = 2;
    for (std::size_t a = 3; a < r.size(); ++a)
        if (r[a] > r[best]) best = a;
    return {r[best] - std::max(r[0], r[1]), static_cast<int>(best - 1)};
}

/// Minimal superset of raw_defer for which the budget-masked decode is
/// feasible. SE: defer every node on a path between a deferred ancestor and
/// a deferred descendant. SSH: defer the whole subtree under a deferred node.
inline std::vector<NodeId> feasibility_closure(const Taxonomy& t, const Contract& c, std::span<const NodeId> raw_defer) {
    t.require_tree("feasibility_closure");
    const std::size_t n = t.size();
    std::vector<std::uint8_t> in(n, 0);
    for (NodeId v : raw_defer) {
        if (v >= n) throw Error(ErrorCode::UnknownNode, "defer set names node " + std::to_string(v));
        in[v] = 1;
    }
    // below[v]: v's subtree (including v) holds a raw deferred node.
    std::vector<std::uint8_t> below(in);
    const auto order = t.topo_order();
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if (below[*it] && !t.is_root(*it)) below[*t.parent(*it)] = 1;
    for (NodeId p : order) {
        if (!in[p]) continue;
        for (NodeId ch : t.children(p))
            if (c.is_strong_subtree() || below[ch]) in[ch] = 1;
    }
    std::vector<NodeId> out;
    for (NodeId v = 0; v < n; ++v)
        if (in[v]) out.push_back(v);
    return out;
}

/// Exact MAP projection restricted to: defer_set -> deferral, all others -> {0, 1}.
inline MapDecode budgeted_decode(const Taxonomy& t, const Contract& c, const PrimitiveTable& eta,
                                 std::span<const NodeId> defer_set) {
    t.require_tree("budgeted_decode");
    require_primitives(t, c, eta);
    const auto masks = detail::budget_masks(t, c, defer_set);
    MapDecode out = detail::decode_log_primitives(t, c, detail::log_table(eta), masks);
    if (out.actions.empty())
        throw Error(ErrorCode::InfeasibleBudgetMask, "defer set is not closed under the contract");
    return out;
}

/// Exact MAP of the TBP joint model with no budget restriction.
inline MapDecode tbp_map_decode(const Taxonomy& t, const Contract& c, const PrimitiveTable& eta) {
    t.require_tree("tbp_map_decode");
    require_primitives(t, c, eta);
    const std::vector<ActionMask> masks(t.size(), c.all_actions());
    return detail::decode_tbp(t, c, detail::tbp_scores(t, c, eta), masks);
}

/// Exact MAP of the TBP joint model over the budget-masked coherent set.
inline MapDecode tbp_map_decode(const Taxonomy& t, const Contract& c, const PrimitiveTable& eta,
                                std::span<const NodeId> defer_set) {
    t.require_tree("tbp_map_decode");
    require_primitives(t, c, eta);
    const auto masks = detail::budget_masks(t, c, defer_set);
    MapDecode out = detail::decode_tbp(t, c, detail::tbp_scores(t, c, eta), masks);
    if (out.actions.empty())
        throw Error(ErrorCode::InfeasibleBudgetMask, "defer set is not closed under the contract");
    return out;
}

/// Per-node argmax of the TBP marginals with budget clamping. Not coherence
/// guaranteed; the audit is attached.
inline AuditedDecode fast_marginal_decode(const Taxonomy& t, const Contract& c, const PrimitiveTable& eta,
                                          std::span<const NodeId> defer_set) {
    const MarginalTable mu = propagate(t, c, eta);
    ActionVector a = detail::clamped_argmax(mu, c, defer_set);
    AuditReport report = audit(t, c, a);
    return {std::move(a), std::move(report)};
}

/// Budget-clamped nodewise argmax of the primitives (binary-relevance L2D).
inline AuditedDecode nodewise_decode(const Taxonomy& t, const Contract& c, const PrimitiveTable& eta,
                                     std::span<const NodeId> defer_set) {
    require_primitives(t, c, eta);
    ActionVector a = detail::clamped_argmax(eta.table(), c, defer_set);
    AuditReport report = audit(t, c, a);
    return {std::move(a), std::move(report)};
}

inline void require_risks(const Taxonomy& t, const Contract& c, const RiskTable& risks) {
    if (risks.rows() != t.size()) throw Error(ErrorCode::ShapeMismatch, "risk table rows do not match taxonomy");
    if (risks.arity() != c.action_count())
        throw Error(ErrorCode::ShapeMismatch, "risk arity does not match contract");
}

namespace detail {

inline RiskDecode decode_risks(const Taxonomy& t, const Contract& c, const RiskTable& risks,
                               std::span<const ActionMask> masks) {
    auto sol = solve_tree_dp(t, c, masks, [&](NodeId v, Action a) { return -risks.at(v, a); });
    if (!sol.feasible) return {};
    return {sol.actions, sum_in_node_order(risks.table(), sol.actions)};
}

}  // namespace detail

/// Minimum-risk coherent action vector.
inline RiskDecode bayes_coherent_decode(const Taxonomy& t, const Contract& c, const RiskTable& risks) {
    t.require_tree("bayes_coherent_decode");
    require_risks(t, c, risks);
    const std::vector<ActionMask> masks(t.size(), c.all_actions());
    return detail::decode_risks(t, c, risks, masks);
}

/// Minimum-risk coherent vector over the budget-masked set.
inline RiskDecode bayes_budgeted_decode(const Taxonomy& t, const Contract& c, const RiskTable& risks,
                                        std::span<const NodeId> defer_set) {
    t.require_tree("bayes_budgeted_decode");
    require_risks(t, c, risks);
    RiskDecode out = detail::decode_risks(t, c, risks, detail::budget_masks(t, c, defer_set));
    if (out.actions.empty())
        throw Error(ErrorCode::InfeasibleBudgetMask, "defer set is not closed under the contract");
    return out;
}

/// Independent per-node risk minimiser (lowest index on ties). No coherence guarantee.
inline AuditedDecode nodewise_bayes_baseline(const Taxonomy& t, const Contract& c, const RiskTable& risks) {
    require_risks(t, c, risks);
    ActionVector a(t.size());
    for (NodeId v = 0; v < t.size(); ++v) {
        const auto r = risks.row(v);
        a[v] = Action::from_index(static_cast<std::size_t>(std::min_element(r.begin(), r.end()) - r.begin()));
    }
    AuditReport report = audit(t, c, a);
    return {std::move(a), std::move(report)};
}

/// Zero-cost oracle quantities for one node: pi = P(Y=1|x), q = P(M=Y|x).
struct NodewiseOracle {
    double pi;
    double q;
};

/// argmax over {1 - pi, pi, q}, lowest index on ties.
inline Action nodewise_oracle_action(NodewiseOracle o) {
    const double s[3] = {1.0 - o.pi, o.pi, o.q};
    return Action::from_index(static_cast<std::size_t>(std::max_element(s, s + 3) - s));
}

inline AuditedDecode nodewise_bayes_baseline(const Taxonomy& t, const Contract& c,
                                             std::span<const NodewiseOracle> oracle) {
    if (oracle.size() != t.size()) throw Error(ErrorCode::ShapeMismatch, "one oracle entry per node is required");
    ActionVector a(t.size());
    for (NodeId v = 0; v < t.size(); ++v) a[v] = nodewise_oracle_action(oracle[v]);
    AuditReport report = audit(t, c, a);
    return {std::move(a), std::move(report)};
}

}  // namespace cohdefer
