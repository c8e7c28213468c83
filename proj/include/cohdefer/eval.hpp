#pragma once
// Budget-swept system evaluation.
//
// Every (instance, node) decision gets a method-specific defer priority;
// the global ranking is cut at each integer threshold of the budget grid,
// the cut is decoded per instance, deferred nodes are completed from the
// expert labels, and utility and incoherence curves are integrated over
// budget fraction with the trapezoid rule.

#include "coherence.hpp"
#include "contract.hpp"
#include "decode.hpp"
#include "taxonomy.hpp"
#include "tbp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cohdefer {

enum class Method { NodewiseBR, Projection, TBPFast, TBPExact, BayesCoherent };

constexpr std::string_view to_string(Method m) {
    switch (m) {
        case Method::NodewiseBR: return "nodewise";
        case Method::Projection: return "project";
        case Method::TBPFast: return "tbp-fast";
        case Method::TBPExact: return "tbp-exact";
        case Method::BayesCoherent: return "bayes";
    }
    return "?";
}

/// Methods whose raw selection passes through the feasibility closure.
constexpr bool uses_closure(Method m) {
    return m == Method::Projection || m == Method::TBPExact || m == Method::BayesCoherent;
}

struct EvalInstance {
    std::string id;
    PrimitiveTable eta;
    LabelVector truth;
    std::vector<LabelVector> experts;  // experts[e - 1] is expert e
    std::optional<RiskTable> risks;    // required by Method::BayesCoherent
};

struct EvaluationSet {
    Taxonomy taxonomy;
    Contract contract;
    Method method;
    std::vector<EvalInstance> instances;
};

/// Unique rounded values of linspace(0, total, intervals + 1); both
/// endpoints are always present.
inline std::vector<std::size_t> budget_grid(std::size_t total, std::size_t intervals = 101) {
    if (total == 0) throw Error(ErrorCode::ShapeMismatch, "budget grid needs at least one decision");
    if (intervals == 0) intervals = 1;
    std::vector<std::size_t> out;
    out.reserve(intervals + 1);
    for (std::size_t i = 0; i <= intervals; ++i) {
        const double x = static_cast<double>(i) * static_cast<double>(total) / static_cast<double>(intervals);
        const auto k = static_cast<std::size_t>(std::nearbyint(x));
        if (out.empty() || out.back() != k) out.push_back(k);
    }
    if (out.front() != 0) out.insert(out.begin(), 0);
    if (out.back() != total) out.push_back(total);
    return out;
}

/// Trapezoid rule over (x, y) pairs; x must be nondecreasing.
inline double trapezoid_auc(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw Error(ErrorCode::ShapeMismatch, "auc inputs differ in length");
    double area = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) area += (x[i] - x[i - 1]) * (y[i] + y[i - 1]) / 2.0;
    return area;
}

inline void validate(const EvaluationSet& set) {
    const auto& t = set.taxonomy;
    const auto& c = set.contract;
    if (set.instances.empty()) throw Error(ErrorCode::ShapeMismatch, "evaluation set has no instances");
    for (const auto& inst : set.instances) {
        require_primitives(t, c, inst.eta);
        require_label_vector(t, inst.truth);
        if (inst.experts.size() != static_cast<std::size_t>(c.experts()))
            throw Error(ErrorCode::ShapeMismatch, "instance '" + inst.id + "' needs one label vector per expert");
        if (set.method == Method::BayesCoherent) {
            if (!inst.risks) throw Error(ErrorCode::ShapeMismatch, "instance '" + inst.id + "' has no risk table");
            require_risks(t, c, *inst.risks);
        }
    }
}

/// Method-specific ranking values r_v(a): eta (nodewise), constrained MAP
/// action scores (projection), TBP marginals (both TBP decoders), or
/// negated risks (Bayes).
inline ActionTable ranking_values(const EvaluationSet& set, const EvalInstance& inst) {
    switch (set.method) {
        case Method::NodewiseBR: return inst.eta.table();
        case Method::Projection: return action_score_table(set.taxonomy, set.contract, inst.eta);
        case Method::TBPFast:
        case Method::TBPExact: return propagate(set.taxonomy, set.contract, inst.eta);
        case Method::BayesCoherent: {
            ActionTable r = inst.risks->table();
            for (double& x : r.data()) x = -x;
            return r;
        }
    }
    return {};
}

struct RankedDecision {
    std::size_t instance;
    NodeId node;
    double score;
    int expert;
};

/// All (instance, node) decisions by descending defer priority; ties break
/// by instance id, then node name.
inline std::vector<RankedDecision> rank_decisions(const EvaluationSet& set) {
    std::vector<RankedDecision> out;
    out.reserve(set.instances.size() * set.taxonomy.size());
    for (std::size_t i = 0; i < set.instances.size(); ++i) {
        const ActionTable r = ranking_values(set, set.instances[i]);
        for (NodeId v = 0; v < set.taxonomy.size(); ++v) {
            const DeferPriority p = defer_priority(r.row(v));
            const double s = std::isnan(p.score) ? kInfeasible : p.score;
            out.push_back({i, v, s, p.expert});
        }
    }
    std::stable_sort(out.begin(), out.end(), [&](const RankedDecision& a, const RankedDecision& b) {
        if (a.score != b.score) return a.score > b.score;
        const auto& ia = set.instances[a.instance].id;
        const auto& ib = set.instances[b.instance].id;
        if (ia != ib) return ia < ib;
        return set.taxonomy.name(a.node) < set.taxonomy.name(b.node);
    });
    return out;
}

struct Selection {
    std::vector<std::vector<NodeId>> raw;     // per instance, ascending
    std::vector<std::vector<NodeId>> closed;  // equals raw for methods without closure
};

inline Selection select_top(const EvaluationSet& set, std::span<const RankedDecision> ranking, std::size_t threshold) {
    Selection sel;
    sel.raw.assign(set.instances.size(), {});
    for (std::size_t k = 0; k < threshold && k < ranking.size(); ++k)
        sel.raw[ranking[k].instance].push_back(ranking[k].node);
    for (auto& r : sel.raw) std::sort(r.begin(), r.end());
    if (uses_closure(set.method)) {
        sel.closed.reserve(sel.raw.size());
        for (const auto& r : sel.raw) sel.closed.push_back(feasibility_closure(set.taxonomy, set.contract, r));
    } else {
        sel.closed = sel.raw;
    }
    return sel;
}

inline Selection rank_and_select(const EvaluationSet& set, std::size_t threshold) {
    validate(set);
    const auto ranking = rank_decisions(set);
    return select_top(set, ranking, threshold);
}

/// Decodes one instance with the set's method under the given defer set.
inline ActionVector decode_instance(const EvaluationSet& set, const EvalInstance& inst, std::span<const NodeId> defer_set) {
    const auto& t = set.taxonomy;
    const auto& c = set.contract;
    switch (set.method) {
        case Method::NodewiseBR: return nodewise_decode(t, c, inst.eta, defer_set).actions;
        case Method::Projection: return budgeted_decode(t, c, inst.eta, defer_set).actions;
        case Method::TBPFast: return fast_marginal_decode(t, c, inst.eta, defer_set).actions;
        case Method::TBPExact: return tbp_map_decode(t, c, inst.eta, defer_set).actions;
        case Method::BayesCoherent: return bayes_budgeted_decode(t, c, *inst.risks, defer_set).actions;
    }
    return {};
}

struct SystemMetrics {
    double balanced_accuracy = 0.0;
    double instance_f1 = 0.0;
    double pooled_label_f1 = 0.0;
    double macro_label_f1 = 0.0;
};

namespace detail {

struct Confusion {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    void add(bool pred, bool truth) {
        if (pred && truth) ++tp;
        else if (pred) ++fp;
        else if (truth) ++fn;
        else ++tn;
    }
    /// 0 when there are no positives in prediction or truth.
    double f1() const {
        const std::size_t d = 2 * tp + fp + fn;
        return d == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(d);
    }
    /// Mean of the rates of the classes that occur in the truth.
    double balanced_accuracy() const {
        const std::size_t pos = tp + fn, neg = tn + fp;
        if (pos == 0 && neg == 0) return 0.0;
        if (pos == 0) return static_cast<double>(tn) / static_cast<double>(neg);
        if (neg == 0) return static_cast<double>(tp) / static_cast<double>(pos);
        return 0.5 * (static_cast<double>(tp) / static_cast<double>(pos) + static_cast<double>(tn) / static_cast<double>(neg));
    }
};

}  // namespace detail

/// Rows are instances, columns labels (nodes).
inline SystemMetrics system_metrics(std::span<const LabelVector> predicted, std::span<const LabelVector> truth) {
    if (predicted.size() != truth.size() || predicted.empty())
        throw Error(ErrorCode::ShapeMismatch, "prediction and truth row counts differ or are zero");
    const std::size_t labels = truth.front().size();
    detail::Confusion pooled;
    std::vector<detail::Confusion> per_label(labels);
    double instance_sum = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (predicted[i].size() != labels || truth[i].size() != labels)
            throw Error(ErrorCode::ShapeMismatch, "row " + std::to_string(i) + " has the wrong number of labels");
        detail::Confusion row;
        for (std::size_t l = 0; l < labels; ++l) {
            const bool p = predicted[i][l] != 0, y = truth[i][l] != 0;
            row.add(p, y);
            pooled.add(p, y);
            per_label[l].add(p, y);
        }
        instance_sum += row.f1();
    }
    SystemMetrics m;
    m.balanced_accuracy = pooled.balanced_accuracy();
    m.pooled_label_f1 = pooled.f1();
    m.instance_f1 = instance_sum / static_cast<double>(truth.size());
    double macro = 0.0;
    for (const auto& c : per_label) macro += c.f1();
    m.macro_label_f1 = labels == 0 ? 0.0 : macro / static_cast<double>(labels);
    return m;
}

struct RateSet {
    double tax = 0.0;
    double ded = 0.0;
    double del = 0.0;
    double any = 0.0;
};

struct IncoherenceRates {
    RateSet edge;           // denominator N * |E|
    RateSet neighbourhood;  // denominator N * |parents with children|
};

inline IncoherenceRates incoherence_rates(std::span<const ActionVector> actions, const Taxonomy& t, const Contract& c) {
    std::array<std::size_t, kDefectClassCount> edge{}, neigh{};
    std::size_t edge_any = 0, neigh_any = 0, edges = 0, parents = 0;
    for (const auto& a : actions) {
        const AuditReport r = audit(t, c, a);
        for (std::size_t k = 0; k < kDefectClassCount; ++k) {
            edge[k] += r.edge_counts[k];
            neigh[k] += r.neighbourhood_counts[k];
        }
        edge_any += r.edges.size() - r.edge_count(DefectClass::Coherent);
        neigh_any += r.neighbourhoods.size() - r.neighbourhood_count(DefectClass::Coherent);
        edges += r.edges.size();
        parents += r.neighbourhoods.size();
    }
    auto rate = [](std::size_t k, std::size_t d) { return d == 0 ? 0.0 : static_cast<double>(k) / static_cast<double>(d); };
    auto idx = [](DefectClass cls) { return static_cast<std::size_t>(cls); };
    IncoherenceRates out;
    out.edge = {rate(edge[idx(DefectClass::TaxonomicContradiction)], edges),
                rate(edge[idx(DefectClass::DeductiveDefect)], edges),
                rate(edge[idx(DefectClass::DelegationViolation)], edges), rate(edge_any, edges)};
    out.neighbourhood = {rate(neigh[idx(DefectClass::TaxonomicContradiction)], parents),
                         rate(neigh[idx(DefectClass::DeductiveDefect)], parents),
                         rate(neigh[idx(DefectClass::DelegationViolation)], parents), rate(neigh_any, parents)};
    return out;
}

enum class Curve {
    BalancedAccuracy,
    InstanceF1,
    PooledLabelF1,
    MacroLabelF1,
    EdgeTax,
    EdgeDed,
    EdgeDel,
    EdgeAny,
    NeighTax,
    NeighDed,
    NeighDel,
    NeighAny,
};

inline constexpr std::array<Curve, 12> kAllCurves = {
    Curve::BalancedAccuracy, Curve::InstanceF1, Curve::PooledLabelF1, Curve::MacroLabelF1,
    Curve::EdgeTax,          Curve::EdgeDed,    Curve::EdgeDel,       Curve::EdgeAny,
    Curve::NeighTax,         Curve::NeighDed,   Curve::NeighDel,      Curve::NeighAny,
};

constexpr std::string_view to_string(Curve c) {
    switch (c) {
        case Curve::BalancedAccuracy: return "sys_balanced_accuracy";
        case Curve::InstanceF1: return "sys_f1_instance";
        case Curve::PooledLabelF1: return "sys_f1_label_pooled";
        case Curve::MacroLabelF1: return "f1_label_macro";
        case Curve::EdgeTax: return "edge_tax";
        case Curve::EdgeDed: return "edge_ded";
        case Curve::EdgeDel: return "edge_del";
        case Curve::EdgeAny: return "edge_any";
        case Curve::NeighTax: return "neigh_tax";
        case Curve::NeighDed: return "neigh_ded";
        case Curve::NeighDel: return "neigh_del";
        case Curve::NeighAny: return "neigh_any";
    }
    return "?";
}

struct SweepPoint {
    std::size_t threshold = 0;
    double budget_fraction = 0.0;  // threshold / N_total, pre-closure
    SystemMetrics metrics;
    IncoherenceRates rates;
    std::size_t raw_deferred = 0;
    std::size_t realised_deferred = 0;

    double value(Curve c) const {
        switch (c) {
            case Curve::BalancedAccuracy: return metrics.balanced_accuracy;
            case Curve::InstanceF1: return metrics.instance_f1;
            case Curve::PooledLabelF1: return metrics.pooled_label_f1;
            case Curve::MacroLabelF1: return metrics.macro_label_f1;
            case Curve::EdgeTax: return rates.edge.tax;
            case Curve::EdgeDed: return rates.edge.ded;
            case Curve::EdgeDel: return rates.edge.del;
            case Curve::EdgeAny: return rates.edge.any;
            case Curve::NeighTax: return rates.neighbourhood.tax;
            case Curve::NeighDed: return rates.neighbourhood.ded;
            case Curve::NeighDel: return rates.neighbourhood.del;
            case Curve::NeighAny: return rates.neighbourhood.any;
        }
        return 0.0;
    }
};

struct ClosureDiagnostics {
    double activation_rate = 0.0;  // share of (instance, threshold > 0) pairs where closure added nodes
    double mean_added = 0.0;       // mean added nodes over the same pairs
    std::size_t max_added = 0;
    double realised_raw_ratio = 1.0;  // total realised / total raw deferrals
};

struct SweepResult {
    Method method = Method::NodewiseBR;
    std::size_t total_decisions = 0;
    std::vector<SweepPoint> points;
    ClosureDiagnostics closure;
    bool extended_semantics = false;

    std::vector<double> budgets() const {
        std::vector<double> x;
        for (const auto& p : points) x.push_back(p.budget_fraction);
        return x;
    }
    std::vector<double> curve(Curve c) const {
        std::vector<double> y;
        for (const auto& p : points) y.push_back(p.value(c));
        return y;
    }
    double auc(Curve c) const { return trapezoid_auc(budgets(), curve(c)); }
};

/// Runs the full budget sweep for one method over the evaluation set.
inline SweepResult run_sweep(const EvaluationSet& set, std::size_t intervals = 101) {
    validate(set);
    const auto& t = set.taxonomy;
    const std::size_t total = set.instances.size() * t.size();
    const auto ranking = rank_decisions(set);

    SweepResult out;
    out.method = set.method;
    out.total_decisions = total;
    out.extended_semantics = set.contract.extended_semantics();

    std::vector<LabelVector> truth;
    for (const auto& inst : set.instances) truth.push_back(inst.truth);

    std::size_t pairs = 0, activations = 0, added_total = 0, raw_total = 0, realised_total = 0;
    for (std::size_t threshold : budget_grid(total, intervals)) {
        const Selection sel = select_top(set, ranking, threshold);
        std::vector<ActionVector> actions;
        std::vector<LabelVector> completed;
        SweepPoint point;
        point.threshold = threshold;
        point.budget_fraction = static_cast<double>(threshold) / static_cast<double>(total);
        for (std::size_t i = 0; i < set.instances.size(); ++i) {
            const auto& inst = set.instances[i];
            ActionVector a = decode_instance(set, inst, sel.closed[i]);
            completed.push_back(complete_system_labels(t, a, inst.experts));
            actions.push_back(std::move(a));
            const std::size_t added = sel.closed[i].size() - sel.raw[i].size();
            point.raw_deferred += sel.raw[i].size();
            point.realised_deferred += sel.closed[i].size();
            if (threshold > 0) {
                ++pairs;
                added_total += added;
                if (added > 0) ++activations;
                out.closure.max_added = std::max(out.closure.max_added, added);
            }
        }
        raw_total += point.raw_deferred;
        realised_total += point.realised_deferred;
        point.metrics = system_metrics(completed, truth);
        point.rates = incoherence_rates(actions, t, set.contract);
        out.points.push_back(point);
    }
    if (pairs > 0) {
        out.closure.activation_rate = static_cast<double>(activations) / static_cast<double>(pairs);
        out.closure.mean_added = static_cast<double>(added_total) / static_cast<double>(pairs);
    }
    if (raw_total > 0)
        out.closure.realised_raw_ratio = static_cast<double>(realised_total) / static_cast<double>(raw_total);
    return out;
}

}  // namespace cohdefer
