// Compares decoders on a synthetic taxonomy across the full defer budget
// and prints utility and incoherence areas under the curve.

#include <cohdefer/cohdefer.hpp>

#include <cstdio>
#include <cstdlib>

using namespace cohdefer;

int main(int argc, char** argv) {
    const std::size_t nodes = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 15;
    const std::size_t count = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 100;
    const Taxonomy t = random_tree(nodes, 3, 42);
    const Contract se = Contract::selective_exclusion();
    const auto instances = make_synthetic_instances(t, se, count, 7);

    std::printf("%zu nodes, %zu instances, %zu decisions\n\n", t.size(), count, t.size() * count);
    std::printf("%-10s %10s %10s %10s %10s %12s\n", "method", "BalAcc", "F1-inst", "edge-any", "neigh-any", "closure-x");
    for (Method m : {Method::NodewiseBR, Method::Projection, Method::TBPFast, Method::TBPExact, Method::BayesCoherent}) {
        const SweepResult r = run_sweep({t, se, m, instances});
        std::printf("%-10s %10.4f %10.4f %10.4f %10.4f %12.4f\n", std::string(to_string(m)).c_str(),
                    r.auc(Curve::BalancedAccuracy), r.auc(Curve::InstanceF1), r.auc(Curve::EdgeAny),
                    r.auc(Curve::NeighAny), r.closure.realised_raw_ratio);
    }
}
