// Two-node example where deferring the parent looks locally best but the
// coherent joint decision asserts both nodes; also trains the local
// primitives through the propagation and shows the decoded policy moving.

#include <cohdefer/cohdefer.hpp>

#include <cmath>
#include <cstdio>

using namespace cohdefer;

int main() {
    const Scenario s = reference_scenario("option_value");
    const Contract se = Contract::selective_exclusion();
    const RiskTable risks = s.risks();

    const AuditedDecode local = nodewise_bayes_baseline(s.taxonomy, se, risks);
    const RiskDecode joint = bayes_coherent_decode(s.taxonomy, se, risks);
    auto risk_of = [&](const ActionVector& a) { return risks.table().at(0, a[0].index()) + risks.table().at(1, a[1].index()); };
    std::printf("nodewise risk minimiser: (%s,%s) risk %.2f %s\n", to_string(local.actions[0]).c_str(),
                to_string(local.actions[1]).c_str(), risk_of(local.actions), local.audit.any_incoherent ? "(incoherent)" : "");
    std::printf("coherent risk minimiser: (%s,%s) risk %.2f\n\n", to_string(joint.actions[0]).c_str(),
                to_string(joint.actions[1]).c_str(), joint.risk);

    const ActionTable theta0(2, 3, {std::log(0.05), std::log(0.45), std::log(0.5), std::log(0.0625), std::log(0.5625), std::log(0.375)});
    const auto batch = option_value_batch();
    const DescentResult r = gradient_descent_demo(theta0, s.taxonomy, se, batch, 200, 0.05);
    for (std::size_t step : {0u, 50u, 100u, 150u, 200u})
        std::printf("step %3zu  objective %.5f\n", step, r.trajectory[step]);
    for (const auto& [label, th] : {std::pair{"start", theta0}, std::pair{"end", r.theta}}) {
        const ActionVector a = tbp_map_decode(s.taxonomy, se, primitives_from_logits(th)).actions;
        std::printf("%-5s decoded (%s,%s) risk %.2f\n", label, to_string(a[0]).c_str(), to_string(a[1]).c_str(), risk_of(a));
    }
}
