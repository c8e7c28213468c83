#pragma once
// Seeded generators for taxonomies, upward-closed labels, expert labels and
// primitive tables, plus the named two-node counterexample scenarios.
// All randomness flows through std::mt19937_64 seeded explicitly.

#include "contract.hpp"
#include "decode.hpp"
#include "eval.hpp"
#include "rpo_loss.hpp"
#include "taxonomy.hpp"
#include "tbp.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace cohdefer {

using Rng = std::mt19937_64;

/// Nodes n0, n1, ... attached one at a time to a uniformly chosen earlier
/// node that still has room (max_children == 0 means unbounded). The first
/// `roots` nodes are roots.
inline Taxonomy random_forest(std::size_t node_count, std::size_t roots, std::size_t max_children, std::uint64_t seed) {
    if (node_count == 0) throw Error(ErrorCode::EmptyTaxonomy, "node_count must be at least 1");
    roots = std::clamp<std::size_t>(roots, 1, node_count);
    Rng rng(seed);
    std::vector<ParentLink> links;
    links.reserve(node_count);
    std::vector<std::size_t> child_count(node_count, 0);
    std::vector<std::size_t> open;  // nodes that can still take a child
    for (std::size_t i = 0; i < node_count; ++i) {
        std::string name = "n" + std::to_string(i);
        if (i < roots || open.empty()) {
            links.push_back({std::move(name), std::string(kSentinel)});
        } else {
            std::uniform_int_distribution<std::size_t> pick(0, open.size() - 1);
            const std::size_t k = pick(rng);
            const std::size_t p = open[k];
            links.push_back({std::move(name), "n" + std::to_string(p)});
            if (max_children != 0 && ++child_count[p] >= max_children) {
                open[k] = open.back();
                open.pop_back();
            }
        }
        open.push_back(i);
    }
    return Taxonomy::from_links(links);
}

inline Taxonomy random_tree(std::size_t node_count, std::size_t max_children, std::uint64_t seed) {
    return random_forest(node_count, 1, max_children, seed);
}

/// Root positivity rate and conditional child rate P(Y_c = 1 | Y_p = 1).
struct LabelSpec {
    double root_rate = 0.5;
    double child_rate = 0.5;
};

/// Top-down sampling; upward-closed by construction.
inline LabelVector sample_labels(const Taxonomy& t, const LabelSpec& spec, Rng& rng) {
    t.require_tree("sample_labels");
    std::bernoulli_distribution root(std::clamp(spec.root_rate, 0.0, 1.0));
    std::bernoulli_distribution child(std::clamp(spec.child_rate, 0.0, 1.0));
    LabelVector y(t.size(), 0);
    for (NodeId v : t.topo_order()) {
        const auto p = t.parent(v);
        if (!p) y[v] = root(rng) ? 1 : 0;
        else y[v] = y[*p] && child(rng) ? 1 : 0;
    }
    return y;
}

inline LabelVector sample_labels(const Taxonomy& t, const LabelSpec& spec, std::uint64_t seed) {
    Rng rng(seed);
    return sample_labels(t, spec, rng);
}

/// Per-node correctness probability q_v for each expert.
struct ExpertModel {
    std::vector<std::vector<double>> accuracy;  // accuracy[e][v]

    static ExpertModel uniform(std::size_t experts, std::size_t nodes, double q) {
        return {std::vector<std::vector<double>>(experts, std::vector<double>(nodes, q))};
    }
    std::size_t experts() const noexcept { return accuracy.size(); }
};

/// Each expert copies the truth with probability q_v and flips it otherwise;
/// the result is upward-closed.
inline std::vector<LabelVector> sample_expert_labels(const Taxonomy& t, const LabelVector& y, const ExpertModel& m,
                                                     Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<LabelVector> out;
    out.reserve(m.experts());
    for (const auto& q : m.accuracy) {
        if (q.size() != t.size()) throw Error(ErrorCode::ShapeMismatch, "expert accuracy needs one entry per node");
        LabelVector e(t.size());
        for (NodeId v = 0; v < t.size(); ++v) e[v] = u(rng) < q[v] ? y[v] : static_cast<std::uint8_t>(1 - y[v]);
        out.push_back(upward_close(t, e));
    }
    return out;
}

/// softmax(sharpness * (onehot(target_v) + noise * N(0, 1))) per node.
inline PrimitiveTable make_primitives(const Taxonomy& t, const Contract& c, std::span<const Action> targets,
                                      double sharpness, Rng& rng, double noise = 1.0) {
    require_action_vector(t, c, targets);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const std::size_t n = c.action_count();
    ActionTable logits(t.size(), n);
    for (NodeId v = 0; v < t.size(); ++v)
        for (std::size_t a = 0; a < n; ++a) {
            const double hot = targets[v].index() == a ? 1.0 : 0.0;
            logits.at(v, a) = sharpness * (hot + noise * gauss(rng));
        }
    return primitives_from_logits(logits);
}

inline PrimitiveTable make_primitives(const Taxonomy& t, const Contract& c, std::span<const Action> targets,
                                      double sharpness, std::uint64_t seed, double noise = 1.0) {
    Rng rng(seed);
    return make_primitives(t, c, targets, sharpness, rng, noise);
}

/// Action targets matching a label vector.
inline ActionVector label_targets(const LabelVector& y) {
    ActionVector a(y.size());
    for (std::size_t v = 0; v < y.size(); ++v) a[v] = y[v] ? Action::present() : Action::absent();
    return a;
}

/// Uniform random primitive rows (flat Dirichlet), clamped at intake.
inline PrimitiveTable random_primitives(std::size_t nodes, std::size_t arity, Rng& rng) {
    std::exponential_distribution<double> expo(1.0);
    ActionTable table(nodes, arity);
    for (std::size_t v = 0; v < nodes; ++v) {
        double z = 0.0;
        for (double& x : table.row(v)) z += (x = expo(rng));
        for (double& x : table.row(v)) x /= z;
    }
    return PrimitiveTable(std::move(table));
}

/// Random nonnegative risk table with entries in [0, 1).
inline RiskTable random_risks(std::size_t nodes, std::size_t arity, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ActionTable table(nodes, arity);
    for (double& x : table.data()) x = u(rng);
    return RiskTable(std::move(table));
}

/// Uniformly random action vector over the contract's action set.
inline ActionVector random_actions(std::size_t nodes, const Contract& c, Rng& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, c.action_count() - 1);
    ActionVector a(nodes);
    for (auto& x : a) x = Action::from_index(pick(rng));
    return a;
}

struct SyntheticConfig {
    LabelSpec labels{0.7, 0.6};
    double sharpness = 2.0;
    double noise = 1.0;
    double expert_accuracy = 0.9;
    double defer_cost = 0.02;
};

/// Evaluation instances "i000", "i001", ... with truth, expert labels,
/// noisy label-centred primitives, and risks from the model's own beliefs.
inline std::vector<EvalInstance> make_synthetic_instances(const Taxonomy& t, const Contract& c, std::size_t count,
                                                          std::uint64_t seed, const SyntheticConfig& cfg = {}) {
    Rng rng(seed);
    const auto experts = static_cast<std::size_t>(c.experts());
    const ExpertModel model = ExpertModel::uniform(experts, t.size(), cfg.expert_accuracy);
    std::vector<EvalInstance> out;
    out.reserve(count);
    const std::size_t width = std::to_string(count > 0 ? count - 1 : 0).size();
    for (std::size_t i = 0; i < count; ++i) {
        std::string id = std::to_string(i);
        id = "i" + std::string(width > id.size() ? width - id.size() : 0, '0') + id;
        LabelVector y = sample_labels(t, cfg.labels, rng);
        auto ex = sample_expert_labels(t, y, model, rng);
        PrimitiveTable eta = make_primitives(t, c, label_targets(y), cfg.sharpness, rng, cfg.noise);
        std::vector<RiskTable::NodeModel> nodes(t.size());
        for (NodeId v = 0; v < t.size(); ++v) {
            const double p0 = eta.row(v)[0], p1 = eta.row(v)[1];
            nodes[v].p_present = p1 / (p0 + p1);
            nodes[v].expert_error.assign(experts, 1.0 - cfg.expert_accuracy);
            nodes[v].defer_cost.assign(experts, cfg.defer_cost);
        }
        out.push_back({std::move(id), std::move(eta), std::move(y), std::move(ex), RiskTable::from_models(nodes)});
    }
    return out;
}

/// Joint probability of one label vector in a scenario's reference law.
struct JointEntry {
    LabelVector y;
    double p;
};

/// Two-node parent -> child fixture with per-node oracle quantities.
struct Scenario {
    std::string name;
    Taxonomy taxonomy;
    std::vector<NodewiseOracle> oracle;  // (pi_v, q_v) in node order
    std::vector<double> defer_cost;      // lambda_v
    std::vector<double> weight;          // w_v
    std::vector<JointEntry> joint;       // empty when not specified
    ActionVector expected_nodewise;

    /// rho(0) = w pi, rho(1) = w (1 - pi), rho(D) = w ((1 - q) + lambda).
    RiskTable risks() const {
        std::vector<RiskTable::NodeModel> nodes;
        for (std::size_t v = 0; v < oracle.size(); ++v)
            nodes.push_back({weight[v], oracle[v].pi, {1.0 - oracle[v].q}, {defer_cost[v]}});
        return RiskTable::from_models(nodes);
    }
};

inline Taxonomy parent_child_taxonomy() { return parse_taxonomy({{"p", std::string(kSentinel)}, {"c", "p"}}); }

inline std::vector<Scenario> reference_scenarios() {
    const Action D = Action::defer();
    std::vector<Scenario> out;
    out.push_back({"delegation_violation",
                   parent_child_taxonomy(),
                   {{0.70, 0.80}, {0.60, 0.40}},
                   {0.0, 0.0},
                   {1.0, 1.0},
                   {{{1, 1}, 0.60}, {{1, 0}, 0.10}, {{0, 0}, 0.30}},
                   {D, Action::present()}});
    out.push_back({"deductive_defect",
                   parent_child_taxonomy(),
                   {{0.20, 0.10}, {0.10, 0.95}},
                   {0.0, 0.0},
                   {1.0, 1.0},
                   {{{1, 1}, 0.10}, {{1, 0}, 0.10}, {{0, 0}, 0.80}},
                   {Action::absent(), D}});
    out.push_back({"option_value",
                   parent_child_taxonomy(),
                   {{0.90, 1.00}, {0.90, 0.60}},
                   {0.05, 0.05},
                   {1.0, 1.0},
                   {},
                   {Action::present(), Action::present()}});
    return out;
}

inline Scenario reference_scenario(std::string_view name) {
    for (auto& s : reference_scenarios())
        if (s.name == name) return s;
    throw Error(ErrorCode::UnknownNode, "unknown scenario '" + std::string(name) + "'");
}

/// Ten supervised two-node cases: five with a correct expert on both nodes,
/// four where the expert misses the child, one all-negative case.
inline std::vector<SupervisedInstance> option_value_batch() {
    std::vector<SupervisedInstance> batch;
    for (int i = 0; i < 5; ++i) batch.push_back({{1, 1}, {{1, 1}}, std::nullopt});
    for (int i = 0; i < 4; ++i) batch.push_back({{1, 1}, {{1, 0}}, std::nullopt});
    batch.push_back({{0, 0}, {{0, 0}}, std::nullopt});
    return batch;
}

}  // namespace cohdefer
