#pragma once
// Taxonomic Belief Propagation: per-edge transition kernels over actions,
// the top-down marginal recursion and the induced joint action model.

#include "coherence.hpp"
#include "contract.hpp"
#include "taxonomy.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

namespace cohdefer {

/// Intake floor for primitive probabilities.
inline constexpr double kProbabilityFloor = 1e-12;
/// Row-sum tolerance accepted at intake before renormalisation.
inline constexpr double kIntakeSumTolerance = 1e-6;

/// Dense node x action table of doubles (primitives, marginals, risks, scores).
class ActionTable {
public:
    ActionTable() = default;
    ActionTable(std::size_t rows, std::size_t arity, double fill = 0.0)
        : rows_(rows), arity_(arity), data_(rows * arity, fill) {}
    ActionTable(std::size_t rows, std::size_t arity, std::vector<double> data)
        : rows_(rows), arity_(arity), data_(std::move(data)) {
        if (data_.size() != rows_ * arity_) throw Error(ErrorCode::ShapeMismatch, "table data size mismatch");
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t arity() const noexcept { return arity_; }
    std::span<double> row(std::size_t v) { return {data_.data() + v * arity_, arity_}; }
    std::span<const double> row(std::size_t v) const { return {data_.data() + v * arity_, arity_}; }
    double& at(std::size_t v, std::size_t a) { return data_[v * arity_ + a]; }
    double at(std::size_t v, std::size_t a) const { return data_[v * arity_ + a]; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

private:
    std::size_t rows_ = 0;
    std::size_t arity_ = 0;
    std::vector<double> data_;
};

using MarginalTable = ActionTable;

/// Local primitive distributions eta_v over actions, validated at intake.
class PrimitiveTable {
public:
    enum class Intake { Clamp, Exact };

    PrimitiveTable() = default;

    /// Rows must be nonnegative and sum to 1 within kIntakeSumTolerance.
    /// Clamp intake floors every entry at kProbabilityFloor and renormalises.
    explicit PrimitiveTable(ActionTable table, Intake intake = Intake::Clamp) : table_(std::move(table)) {
        if (table_.arity() < 3) throw Error(ErrorCode::ShapeMismatch, "primitive rows need at least 3 actions");
        for (std::size_t v = 0; v < table_.rows(); ++v) {
            auto r = table_.row(v);
            double sum = 0.0;
            for (double x : r) {
                if (!std::isfinite(x) || x < 0.0)
                    throw Error(ErrorCode::InvalidDistribution, "row " + std::to_string(v) + " has a negative or non-finite entry");
                sum += x;
            }
            if (std::abs(sum - 1.0) > kIntakeSumTolerance)
                throw Error(ErrorCode::InvalidDistribution,
                            "row " + std::to_string(v) + " sums to " + std::to_string(sum));
            if (intake == Intake::Clamp) {
                bool clamped = false;
                for (double& x : r)
                    if (x < kProbabilityFloor) {
                        x = kProbabilityFloor;
                        clamped = true;
                    }
                if (clamped) sum = std::accumulate(r.begin(), r.end(), 0.0);
            }
            if (sum != 1.0)
                for (double& x : r) x /= sum;
        }
    }

    PrimitiveTable(std::size_t rows, std::size_t arity, std::vector<double> data, Intake intake = Intake::Clamp)
        : PrimitiveTable(ActionTable(rows, arity, std::move(data)), intake) {}

    std::size_t rows() const noexcept { return table_.rows(); }
    std::size_t arity() const noexcept { return table_.arity(); }
    std::span<const double> row(NodeId v) const { return table_.row(v); }
    double at(NodeId v, Action a) const { return table_.at(v, a.index()); }
    const ActionTable& table() const noexcept { return table_; }

private:
    ActionTable table_;
};

inline void require_primitives(const Taxonomy& t, const Contract& c, const PrimitiveTable& eta) {
    if (eta.rows() != t.size())
        throw Error(ErrorCode::ShapeMismatch, "primitive table rows do not match taxonomy size");
    if (eta.arity() != c.action_count())
        throw Error(ErrorCode::ShapeMismatch, "primitive arity " + std::to_string(eta.arity()) +
                                                  " does not match contract with " +
                                                  std::to_string(c.action_count()) + " actions");
}

/// Share of the deferred-parent mass sent to the child's absent action:
/// eta(0) / (eta(0) + eta(D)), or 1 when that admissible mass is zero.
inline double alpha(std::span<const double> eta) {
    const double mass = eta[0] + eta[2];
    if (mass == 0.0) return 1.0;
    return eta[0] / mass;
}

class TransitionKernel {
public:
    explicit TransitionKernel(std::size_t n) : n_(n), m_(n * n, 0.0) {}

    std::size_t size() const noexcept { return n_; }
    double operator()(std::size_t parent, std::size_t child) const { return m_[parent * n_ + child]; }
    double& operator()(std::size_t parent, std::size_t child) { return m_[parent * n_ + child]; }
    std::span<const double> row(std::size_t parent) const { return {m_.data() + parent * n_, n_}; }

private:
    std::size_t n_;
    std::vector<double> m_;
};

/// Rows are parent actions, columns child actions, both in action-index order.
inline TransitionKernel build_kernel(const Contract& contract, std::span<const double> eta) {
    const std::size_t n = contract.action_count();
    if (eta.size() != n) throw Error(ErrorCode::ShapeMismatch, "primitive arity does not match contract");
    TransitionKernel k(n);
    k(0, 0) = 1.0;
    for (std::size_t j = 0; j < n; ++j) k(1, j) = eta[j];

    for (std::size_t i = 2; i < n; ++i) {
        const Action parent = Action::from_index(i);
        switch (contract.kind()) {
            case ContractKind::SelectiveExclusion: {
                const double a = alpha(eta);
                k(i, 0) = a;
                k(i, 2) = 1.0 - a;
                break;
            }
            case ContractKind::StrongSubtreeHandoff:
                k(i, 2) = 1.0;
                break;
            case ContractKind::MultiExpert: {
                const ActionMask admissible = contract.admissible_children(parent);
                double z = 0.0;
                for (std::size_t j = 0; j < n; ++j)
                    if ((admissible >> j) & 1U) z += eta[j];
                if (z == 0.0) {
                    k(i, 0) = 1.0;
                    break;
                }
                for (std::size_t j = 0; j < n; ++j)
                    if ((admissible >> j) & 1U) k(i, j) = eta[j] / z;
                break;
            }
        }
    }
    return k;
}

/// Unconditional action marginals, parents before children.
inline MarginalTable propagate(const Taxonomy& t, const Contract& contract, const PrimitiveTable& eta) {
    t.require_tree("propagate");
    require_primitives(t, contract, eta);
    const std::size_t n = contract.action_count();
    MarginalTable mu(t.size(), n);
    for (NodeId v : t.topo_order()) {
        auto out = mu.row(v);
        const auto parent = t.parent(v);
        if (!parent) {
            std::copy(eta.row(v).begin(), eta.row(v).end(), out.begin());
            continue;
        }
        const TransitionKernel k = build_kernel(contract, eta.row(v));
        const auto up = mu.row(*parent);
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += up[i] * k(i, j);
            out[j] = s;
        }
    }
    return mu;
}

/// P_TBP(a) = prod over roots of eta_r(a_r) times prod over edges of T_v[a_pa, a_v].
inline double joint_probability(const Taxonomy& t, const Contract& contract, const PrimitiveTable& eta,
                                std::span<const Action> a) {
    t.require_tree("joint_probability");
    require_primitives(t, contract, eta);
    require_action_vector(t, contract, a);
    double p = 1.0;
    for (NodeId v : t.topo_order()) {
        const auto parent = t.parent(v);
        if (!parent) {
            p *= eta.at(v, a[v]);
        } else {
            p *= build_kernel(contract, eta.row(v))(a[*parent].index(), a[v].index());
        }
        if (p == 0.0) return 0.0;
    }
    return p;
}

}  // namespace cohdefer
