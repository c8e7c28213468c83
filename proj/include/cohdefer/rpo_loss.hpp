#pragma once
// Toy-scale Stage I / RPO objectives with exact analytic gradients.
//
// Parameters are free logits per node (no network). Stage I applies the
// defer-aware cross-entropy to the softmax primitives; RPO applies it to the
// TBP marginals and backpropagates through every kernel entry, so descendant
// losses reach ancestor logits.

#include "coherence.hpp"
#include "contract.hpp"
#include "taxonomy.hpp"
#include "tbp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace cohdefer {

struct SupervisedInstance {
    LabelVector y;                               // upward-closed truth
    std::vector<LabelVector> experts;            // one upward-closed vector per expert
    std::optional<std::vector<double>> soft;     // optional soft scores s_v in [0, 1]
};

struct LossOptions {
    bool use_soft_targets = false;  // classification term weights (1 - s, s) on actions 0/1
};

struct Objective {
    double value = 0.0;
    ActionTable gradient;  // d value / d theta, same shape as theta
};

enum class ObjectiveKind { Stage1, Rpo };

inline void softmax_row(std::span<const double> logits, std::span<double> out) {
    const double top = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (std::size_t a = 0; a < logits.size(); ++a) z += (out[a] = std::exp(logits[a] - top));
    for (double& x : out) x /= z;
}

inline ActionTable softmax_rows(const ActionTable& theta) {
    ActionTable eta(theta.rows(), theta.arity());
    for (std::size_t v = 0; v < theta.rows(); ++v) softmax_row(theta.row(v), eta.row(v));
    return eta;
}

/// Primitive table of softmax(theta_v), through the clamped intake.
inline PrimitiveTable primitives_from_logits(const ActionTable& theta) {
    return PrimitiveTable(softmax_rows(theta));
}

namespace detail {

inline double floored_log(double p) { return std::log(std::max(p, kProbabilityFloor)); }
inline double floored_inv(double p) { return p > kProbabilityFloor ? 1.0 / p : 0.0; }

}  // namespace detail

/// -log d(y) - sum_e [expert e correct] log d(D_e). With a soft score the
/// first term becomes -(1 - s) log d(0) - s log d(1).
inline double defer_loss(std::span<const double> dist, std::uint8_t y, std::span<const std::uint8_t> expert_correct,
                         std::optional<double> soft = std::nullopt) {
    if (dist.size() != 2 + expert_correct.size())
        throw Error(ErrorCode::ShapeMismatch, "distribution arity must be 2 + expert count");
    double loss = 0.0;
    if (soft)
        loss -= (1.0 - *soft) * detail::floored_log(dist[0]) + *soft * detail::floored_log(dist[1]);
    else
        loss -= detail::floored_log(dist[y ? 1 : 0]);
    for (std::size_t e = 0; e < expert_correct.size(); ++e)
        if (expert_correct[e]) loss -= detail::floored_log(dist[2 + e]);
    return loss;
}

/// Adds d defer_loss / d dist into grad.
inline void defer_loss_gradient(std::span<const double> dist, std::uint8_t y,
                                std::span<const std::uint8_t> expert_correct, std::optional<double> soft,
                                std::span<double> grad) {
    if (soft) {
        grad[0] -= (1.0 - *soft) * detail::floored_inv(dist[0]);
        grad[1] -= *soft * detail::floored_inv(dist[1]);
    } else {
        const std::size_t k = y ? 1 : 0;
        grad[k] -= detail::floored_inv(dist[k]);
    }
    for (std::size_t e = 0; e < expert_correct.size(); ++e)
        if (expert_correct[e]) grad[2 + e] -= detail::floored_inv(dist[2 + e]);
}

inline void validate_batch(std::size_t nodes, std::size_t arity, std::span<const SupervisedInstance> batch,
                           const Taxonomy* t) {
    const std::size_t experts = arity - 2;
    for (const auto& inst : batch) {
        if (inst.y.size() != nodes || inst.experts.size() != experts)
            throw Error(ErrorCode::ShapeMismatch, "instance does not match parameter shape");
        for (const auto& m : inst.experts)
            if (m.size() != nodes) throw Error(ErrorCode::ShapeMismatch, "expert vector size mismatch");
        if (inst.soft && inst.soft->size() != nodes) throw Error(ErrorCode::ShapeMismatch, "soft score size mismatch");
        if (t) {
            if (!is_upward_closed(*t, inst.y))
                throw Error(ErrorCode::ExpertVectorNotClosed, "truth labels are not upward-closed");
            for (const auto& m : inst.experts)
                if (!is_upward_closed(*t, m))
                    throw Error(ErrorCode::ExpertVectorNotClosed, "expert labels are not upward-closed");
        }
    }
}

namespace detail {

/// Sum of node losses over the batch on per-node distributions `dist`,
/// accumulating d/d dist into grad.
inline double batch_loss(const ActionTable& dist, std::span<const SupervisedInstance> batch, const LossOptions& opt,
                         ActionTable& grad) {
    const std::size_t experts = dist.arity() - 2;
    std::vector<std::uint8_t> correct(experts);
    double total = 0.0;
    for (const auto& inst : batch) {
        for (std::size_t v = 0; v < dist.rows(); ++v) {
            for (std::size_t e = 0; e < experts; ++e) correct[e] = inst.experts[e][v] == inst.y[v];
            std::optional<double> s;
            if (opt.use_soft_targets && inst.soft) s = (*inst.soft)[v];
            total += defer_loss(dist.row(v), inst.y[v], correct, s);
            defer_loss_gradient(dist.row(v), inst.y[v], correct, s, grad.row(v));
        }
    }
    return total;
}

/// Chain rule through softmax: dtheta = eta * (g - <g, eta>).
inline ActionTable softmax_backward(const ActionTable& eta, const ActionTable& g_eta) {
    ActionTable out(eta.rows(), eta.arity());
    for (std::size_t v = 0; v < eta.rows(); ++v) {
        double dot = 0.0;
        for (std::size_t a = 0; a < eta.arity(); ++a) dot += g_eta.at(v, a) * eta.at(v, a);
        for (std::size_t a = 0; a < eta.arity(); ++a) out.at(v, a) = eta.at(v, a) * (g_eta.at(v, a) - dot);
    }
    return out;
}

/// Accumulates d/d eta of sum_{ij} g_kernel[i][j] * T(eta)[i][j].
inline void kernel_backward(const Contract& c, std::span<const double> eta, const TransitionKernel& k,
                            std::span<const double> g_kernel, std::span<double> g_eta) {
    const std::size_t n = c.action_count();
    for (std::size_t j = 0; j < n; ++j) g_eta[j] += g_kernel[1 * n + j];
    for (std::size_t i = 2; i < n; ++i) {
        switch (c.kind()) {
            case ContractKind::SelectiveExclusion: {
                const double s = eta[0] + eta[2];
                if (s == 0.0) break;
                const double d = g_kernel[i * n + 0] - g_kernel[i * n + 2];
                g_eta[0] += d * eta[2] / (s * s);
                g_eta[2] -= d * eta[0] / (s * s);
                break;
            }
            case ContractKind::StrongSubtreeHandoff:
                break;
            case ContractKind::MultiExpert: {
                const ActionMask adm = c.admissible_children(Action::from_index(i));
                double z = 0.0;
                for (std::size_t a = 0; a < n; ++a)
                    if ((adm >> a) & 1U) z += eta[a];
                if (z == 0.0) break;
                double weighted = 0.0;
                for (std::size_t a = 0; a < n; ++a)
                    if ((adm >> a) & 1U) weighted += g_kernel[i * n + a] * k(i, a);
                for (std::size_t b = 0; b < n; ++b)
                    if ((adm >> b) & 1U) g_eta[b] += (g_kernel[i * n + b] - weighted) / z;
                break;
            }
        }
    }
}

}  // namespace detail

inline Objective stage1_objective(const ActionTable& theta, std::span<const SupervisedInstance> batch,
                                  const LossOptions& opt = {}) {
    if (theta.arity() < 3) throw Error(ErrorCode::ShapeMismatch, "theta needs at least 3 actions per node");
    validate_batch(theta.rows(), theta.arity(), batch, nullptr);
    const ActionTable eta = softmax_rows(theta);
    ActionTable g_eta(theta.rows(), theta.arity());
    Objective out;
    out.value = detail::batch_loss(eta, batch, opt, g_eta);
    out.gradient = detail::softmax_backward(eta, g_eta);
    return out;
}

inline Objective rpo_objective(const ActionTable& theta, const Taxonomy& t, const Contract& c,
                               std::span<const SupervisedInstance> batch, const LossOptions& opt = {}) {
    t.require_tree("rpo_objective");
    if (theta.rows() != t.size() || theta.arity() != c.action_count())
        throw Error(ErrorCode::ShapeMismatch, "theta shape does not match taxonomy and contract");
    validate_batch(theta.rows(), theta.arity(), batch, &t);
    const std::size_t n = c.action_count();
    const ActionTable eta = softmax_rows(theta);

    std::vector<std::optional<TransitionKernel>> kernels(t.size());
    ActionTable mu(t.size(), n);
    for (NodeId v : t.topo_order()) {
        const auto parent = t.parent(v);
        if (!parent) {
            std::copy(eta.row(v).begin(), eta.row(v).end(), mu.row(v).begin());
            continue;
        }
        kernels[v].emplace(build_kernel(c, eta.row(v)));
        const auto& k = *kernels[v];
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += mu.at(*parent, i) * k(i, j);
            mu.at(v, j) = s;
        }
    }

    ActionTable g_mu(t.size(), n);
    Objective out;
    out.value = detail::batch_loss(mu, batch, opt, g_mu);

    ActionTable g_eta(t.size(), n);
    std::vector<double> g_kernel(n * n);
    const auto order = t.topo_order();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const NodeId v = *it;
        const auto parent = t.parent(v);
        if (!parent) {
            for (std::size_t a = 0; a < n; ++a) g_eta.at(v, a) += g_mu.at(v, a);
            continue;
        }
        const auto& k = *kernels[v];
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                s += k(i, j) * g_mu.at(v, j);
                g_kernel[i * n + j] = mu.at(*parent, i) * g_mu.at(v, j);
            }
            g_mu.at(*parent, i) += s;
        }
        detail::kernel_backward(c, eta.row(v), k, g_kernel, g_eta.row(v));
    }
    out.gradient = detail::softmax_backward(eta, g_eta);
    return out;
}

struct DescentResult {
    std::vector<double> trajectory;  // objective before each step, then final
    ActionTable theta;
};

/// Plain fixed-step gradient descent. Throws DivergenceDetected when the
/// objective rises for more than 10 consecutive steps.
inline DescentResult gradient_descent_demo(const ActionTable& theta0, const Taxonomy& t, const Contract& c,
                                           std::span<const SupervisedInstance> batch, std::size_t steps, double rate,
                                           ObjectiveKind kind = ObjectiveKind::Rpo, const LossOptions& opt = {}) {
    auto evaluate = [&](const ActionTable& th) {
        return kind == ObjectiveKind::Rpo ? rpo_objective(th, t, c, batch, opt) : stage1_objective(th, batch, opt);
    };
    DescentResult out{{}, theta0};
    Objective obj = evaluate(out.theta);
    out.trajectory.push_back(obj.value);
    int rising = 0;
    for (std::size_t step = 0; step < steps; ++step) {
        auto th = out.theta.data();
        auto g = obj.gradient.data();
        for (std::size_t i = 0; i < th.size(); ++i) th[i] -= rate * g[i];
        obj = evaluate(out.theta);
        if (!std::isfinite(obj.value)) throw Error(ErrorCode::NonFiniteValue, "objective became non-finite");
        rising = obj.value > out.trajectory.back() ? rising + 1 : 0;
        out.trajectory.push_back(obj.value);
        if (rising > 10) throw Error(ErrorCode::DivergenceDetected, "objective rose for more than 10 consecutive steps");
    }
    return out;
}

}  // namespace cohdefer
