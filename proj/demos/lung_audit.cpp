// Audits a few hand-written action vectors on a four-node chest taxonomy,
// then repairs a noisy nodewise decode by coherent projection.

#include <cohdefer/cohdefer.hpp>

#include <cstdio>
#include <string>

using namespace cohdefer;

namespace {

std::string show(const Taxonomy& t, const ActionVector& a) {
    std::string s;
    for (NodeId v = 0; v < t.size(); ++v) s += (v ? "  " : "") + t.name(v) + "=" + to_string(a[v]);
    return s;
}

void report(const Taxonomy& t, const Contract& c, const ActionVector& a) {
    const AuditReport r = audit(t, c, a);
    std::printf("%s\n  %s\n", show(t, a).c_str(), r.any_incoherent ? "INCOHERENT" : "coherent");
    for (const auto& e : r.edges)
        if (e.cls != DefectClass::Coherent)
            std::printf("    %s -> %s: %s\n", t.name(e.parent).c_str(), t.name(e.child).c_str(), std::string(to_string(e.cls)).c_str());
}

}  // namespace

int main() {
    const Taxonomy t = parse_taxonomy({{"LungOpacity", "ROOT"},
                                       {"Edema", "LungOpacity"},
                                       {"Infiltration", "LungOpacity"},
                                       {"Consolidation", "LungOpacity"}});
    const Contract se = Contract::selective_exclusion();
    const Action D = Action::defer();
    const Action A = Action::absent(), P = Action::present();

    std::puts("== audit ==");
    report(t, se, {A, P, A, A});  // child present under an absent parent
    report(t, se, {D, P, A, A});  // deferred parent, asserted child
    report(t, se, {A, A, D, A});  // deferring an entailed absence
    report(t, se, {P, P, A, D});

    std::puts("\n== projection ==");
    const PrimitiveTable eta(ActionTable(4, 3, std::vector<double>{
                                                   0.30, 0.25, 0.45,  // LungOpacity leans defer
                                                   0.10, 0.70, 0.20,  // Edema confidently present
                                                   0.60, 0.10, 0.30,
                                                   0.50, 0.20, 0.30,
                                               }));
    const AuditedDecode raw = nodewise_decode(t, se, eta, std::vector<NodeId>{0});
    std::puts("nodewise with LungOpacity deferred:");
    report(t, se, raw.actions);
    const MapDecode fixed = project_map(t, se, eta);
    std::printf("coherent projection (log-score %.4f):\n", fixed.score);
    report(t, se, fixed.actions);
    const MapDecode tbp = tbp_map_decode(t, se, eta);
    std::printf("propagation MAP (log-prob %.4f):\n", tbp.score);
    report(t, se, tbp.actions);
}
