#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace cohdefer;
using namespace cohdefer::test;

namespace {

std::vector<double> log_scores(const PrimitiveTable& eta) {
    std::vector<double> out;
    for (double x : eta.table().data()) out.push_back(std::log(x));
    return out;
}

std::vector<ActionMask> masks_for(const Taxonomy& t, const Contract& c, const std::vector<NodeId>& defer) {
    ActionMask d = 0;
    for (std::size_t a = 2; a < c.action_count(); ++a) d |= 1U << a;
    std::vector<ActionMask> m(t.size(), 0b11);
    for (NodeId v : defer) m[v] = d;
    return m;
}

/// Root log-primitive plus log kernel entries, summed in node order.
double tbp_objective(const Taxonomy& t, const Contract& c, const PrimitiveTable& eta, std::span<const Action> a) {
    double s = 0.0;
    for (NodeId v = 0; v < t.size(); ++v) {
        if (t.is_root(v)) s += std::log(eta.at(v, a[v]));
        else s += std::log(build_kernel(c, eta.row(v))(a[*t.parent(v)].index(), a[v].index()));
    }
    return s;
}

std::vector<NodeId> random_subset(std::size_t n, Rng& rng, double rate) {
    std::bernoulli_distribution pick(rate);
    std::vector<NodeId> out;
    for (NodeId v = 0; v < n; ++v)
        if (pick(rng)) out.push_back(v);
    return out;
}

}  // namespace

TEST(ProjectMap, TwoNodeWorkedExample) {
    const Taxonomy t = pair_tree();
    const PrimitiveTable eta = prims(2, 3, {0.6, 0.2, 0.2, 0.1, 0.8, 0.1});
    const MapDecode d = project_map(t, Contract::selective_exclusion(), eta);
    EXPECT_EQ(d.actions, acts({1, 1}));
    EXPECT_EQ(d.score, std::log(0.2) + std::log(0.8));
    EXPECT_FALSE(audit(t, Contract::selective_exclusion(), d.actions).any_incoherent);
}

TEST(ProjectMap, OneHotCoherentVectorIsRecovered) {
    const Taxonomy t = lung_subtree();
    const PrimitiveTable eta = prims(4, 3, {0, 1, 0, 0, 0, 1, 1, 0, 0, 0, 1, 0});
    const MapDecode d = project_map(t, Contract::selective_exclusion(), eta);
    EXPECT_EQ(d.actions, acts({1, D, 0, 1}));
    EXPECT_LE(std::abs(d.score), 4 * 3e-12);
}

TEST(ProjectMap, Deterministic) {
    Rng rng(2);
    const Taxonomy t = random_tree(30, 0, 5);
    const PrimitiveTable eta = random_primitives(30, 3, rng);
    const MapDecode a = project_map(t, Contract::selective_exclusion(), eta);
    const MapDecode b = project_map(t, Contract::selective_exclusion(), eta);
    EXPECT_EQ(a.actions, b.actions);
    EXPECT_EQ(a.score, b.score);
}

TEST(ProjectMap, AllEqualScoresTakeLowestIndex) {
    const Taxonomy t = lung_subtree();
    const PrimitiveTable eta = prims(4, 3, std::vector<double>(12, 1.0 / 3.0));
    EXPECT_EQ(project_map(t, Contract::selective_exclusion(), eta).actions, acts({0, 0, 0, 0}));
}

TEST(ProjectMap, ForestFactorsAcrossRoots) {
    const Taxonomy f = parse_taxonomy({{"a", kRoot}, {"b", "a"}, {"c", kRoot}, {"d", "c"}});
    const PrimitiveTable eta = prims(4, 3, {0.6, 0.2, 0.2, 0.1, 0.8, 0.1, 0.1, 0.1, 0.8, 0.5, 0.1, 0.4});
    const MapDecode d = project_map(f, Contract::selective_exclusion(), eta);
    EXPECT_EQ(d.actions, acts({1, 1, D, 0}));
}

TEST(ProjectMap, RejectsDag) {
    const Taxonomy d = parse_taxonomy({{"a", kRoot}, {"b", kRoot}, {"c", "a"}, {"c", "b"}});
    try {
        project_map(d, Contract::selective_exclusion(), prims(3, 3, std::vector<double>(9, 1.0 / 3.0)));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DagUnsupported);
    }
}

TEST(ActionScores, WorkedExample) {
    const Taxonomy t = pair_tree();
    const PrimitiveTable eta = prims(2, 3, {0.6, 0.2, 0.2, 0.1, 0.8, 0.1});
    const Contract se = Contract::selective_exclusion();
    const auto v = action_scores(t, se, eta, 1);
    EXPECT_EQ(v[1], std::log(0.2) + std::log(0.8));
    EXPECT_EQ(v[0], std::log(0.6) + std::log(0.1));
    EXPECT_EQ(v[2], std::log(0.2) + std::log(0.1));
    EXPECT_EQ(*std::max_element(v.begin(), v.end()), project_map(t, se, eta).score);
    // Parent V: D forces the child into {0, D}.
    const auto p = action_scores(t, se, eta, 0);
    EXPECT_EQ(p[2], std::log(0.2) + std::log(0.1));
    EXPECT_DOUBLE_EQ(defer_priority(p).score, std::log(0.02) - std::log(0.16));
}

TEST(ActionScores, InfeasibleActionIsMinusInfinity) {
    const Taxonomy t = pair_tree();
    const PrimitiveTable eta = prims(2, 3, {0.6, 0.2, 0.2, 0.1, 0.8, 0.1});
    const auto v = action_scores(t, Contract::strong_subtree_handoff(), eta, 1);
    EXPECT_TRUE(std::isfinite(v[2]));
    const Taxonomy single = parse_taxonomy({{"a", kRoot}});
    const auto s = action_scores(single, Contract::selective_exclusion(), prims(1, 3, {0.2, 0.3, 0.5}), 0);
    EXPECT_EQ(s[0], std::log(0.2));
}

TEST(DeferPriority, Examples) {
    EXPECT_DOUBLE_EQ(defer_priority(std::vector<double>{0.2, 0.3, 0.5}).score, 0.2);
    EXPECT_DOUBLE_EQ(defer_priority(std::vector<double>{0.5, 0.5, 0.0}).score, -0.5);
    const DeferPriority me = defer_priority(std::vector<double>{0.1, 0.2, 0.3, 0.6, 0.6});
    EXPECT_DOUBLE_EQ(me.score, 0.4);
    EXPECT_EQ(me.expert, 2);
}

TEST(Closure, ChainFixture) {
    const Taxonomy t = parse_taxonomy({{"r", kRoot}, {"a", "r"}, {"b", "a"}});
    const Contract se = Contract::selective_exclusion();
    EXPECT_EQ(feasibility_closure(t, se, std::vector<NodeId>{0, 2}), (std::vector<NodeId>{0, 1, 2}));
    EXPECT_TRUE(feasibility_closure(t, se, std::vector<NodeId>{}).empty());
    EXPECT_EQ(feasibility_closure(t, se, std::vector<NodeId>{0}), (std::vector<NodeId>{0}));
    EXPECT_EQ(feasibility_closure(t, Contract::strong_subtree_handoff(), std::vector<NodeId>{0}),
              (std::vector<NodeId>{0, 1, 2}));
}

TEST(Closure, IdempotentMonotoneMinimal) {
    Rng rng(31);
    const std::vector<Contract> contracts = {Contract::selective_exclusion(), Contract::strong_subtree_handoff(),
                                             Contract::multi_expert(2)};
    for (const Contract& c : contracts)
        for (int trial = 0; trial < 60; ++trial) {
            const Taxonomy t = random_small_tree(rng, 1, 7);
            const auto raw = random_subset(t.size(), rng, 0.3);
            const auto closed = feasibility_closure(t, c, raw);
            ASSERT_EQ(feasibility_closure(t, c, closed), closed);
            ASSERT_TRUE(std::includes(closed.begin(), closed.end(), raw.begin(), raw.end()));
            auto more = raw;
            for (NodeId v : random_subset(t.size(), rng, 0.3)) more.push_back(v);
            std::sort(more.begin(), more.end());
            more.erase(std::unique(more.begin(), more.end()), more.end());
            const auto closed_more = feasibility_closure(t, c, more);
            ASSERT_TRUE(std::includes(closed_more.begin(), closed_more.end(), closed.begin(), closed.end()));
            const auto minimal = oracle::brute_minimal_closures(t, c, raw);
            ASSERT_EQ(minimal.size(), 1u);
            ASSERT_EQ(minimal.front(), closed);
        }
}

TEST(BudgetedDecode, EmptyAndFullDeferSets) {
    Rng rng(6);
    const Taxonomy t = random_tree(8, 0, 3);
    const PrimitiveTable eta = random_primitives(8, 3, rng);
    const Contract se = Contract::selective_exclusion();
    const MapDecode none = budgeted_decode(t, se, eta, std::vector<NodeId>{});
    for (Action a : none.actions) EXPECT_FALSE(a.is_defer());
    std::vector<NodeId> all(8);
    for (NodeId v = 0; v < 8; ++v) all[v] = v;
    const MapDecode full = budgeted_decode(t, se, eta, all);
    for (Action a : full.actions) EXPECT_EQ(a, Action::defer());
    EXPECT_FALSE(audit(t, se, full.actions).any_incoherent);
}

TEST(BudgetedDecode, UnclosedMaskIsInfeasible) {
    const Taxonomy t = parse_taxonomy({{"r", kRoot}, {"a", "r"}, {"b", "a"}});
    try {
        budgeted_decode(t, Contract::selective_exclusion(), prims(3, 3, std::vector<double>(9, 1.0 / 3.0)),
                        std::vector<NodeId>{0, 2});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InfeasibleBudgetMask);
    }
}

TEST(TbpMapDecode, SingleNodeAndStructuralZeros) {
    const Taxonomy single = parse_taxonomy({{"a", kRoot}});
    const Contract se = Contract::selective_exclusion();
    EXPECT_EQ(tbp_map_decode(single, se, prims(1, 3, {0.2, 0.3, 0.5})).actions, acts({D}));
    EXPECT_EQ(tbp_map_decode(single, se, prims(1, 3, {0.2, 0.3, 0.5}), std::vector<NodeId>{}).actions, acts({1}));
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        const Taxonomy t = random_small_tree(rng, 2, 12);
        const PrimitiveTable eta = random_primitives(t.size(), 3, rng);
        const MapDecode d = tbp_map_decode(t, se, eta);
        ASSERT_FALSE(audit(t, se, d.actions).any_incoherent);
        ASSERT_GT(joint_probability(t, se, eta, d.actions), 0.0);
    }
}

TEST(FastMarginalDecode, BudgetClampCanBreakCoherence) {
    const Taxonomy t = pair_tree();
    const Contract se = Contract::selective_exclusion();
    const PrimitiveTable eta = prims(2, 3, {0.1, 0.6, 0.3, 0.1, 0.8, 0.1});
    const AuditedDecode d = fast_marginal_decode(t, se, eta, std::vector<NodeId>{0});
    EXPECT_EQ(d.actions, acts({D, 1}));
    EXPECT_EQ(d.audit.edge_count(DefectClass::DelegationViolation), 1u);
    const AuditedDecode all = fast_marginal_decode(t, se, eta, std::vector<NodeId>{0, 1});
    EXPECT_EQ(all.actions, acts({D, D}));
    const PrimitiveTable hot = prims(2, 3, {0, 1, 0, 1, 0, 0});
    EXPECT_EQ(fast_marginal_decode(t, se, hot, std::vector<NodeId>{}).actions, acts({1, 0}));
}

TEST(NodewiseDecode, BudgetClampedArgmax) {
    const Taxonomy t = pair_tree();
    const Contract se = Contract::selective_exclusion();
    const PrimitiveTable eta = prims(2, 3, {0.5, 0.1, 0.4, 0.1, 0.3, 0.6});
    EXPECT_EQ(nodewise_decode(t, se, eta, std::vector<NodeId>{}).actions, acts({0, 1}));
    const AuditedDecode d = nodewise_decode(t, se, eta, std::vector<NodeId>{1});
    EXPECT_EQ(d.actions, acts({0, D}));
    EXPECT_EQ(d.audit.edge_count(DefectClass::DeductiveDefect), 1u);
}

TEST(BayesCoherent, OptionValueScenario) {
    const Scenario s = reference_scenario("option_value");
    const Contract se = Contract::selective_exclusion();
    const RiskDecode d = bayes_coherent_decode(s.taxonomy, se, s.risks());
    EXPECT_EQ(d.actions, acts({1, 1}));
    EXPECT_NEAR(d.risk, 0.20, 1e-12);
    // Best coherent vector with the parent deferred.
    const RiskDecode defer_parent = bayes_budgeted_decode(s.taxonomy, se, s.risks(), std::vector<NodeId>{0, 1});
    double best = 1e9;
    for (const auto& a : oracle::enumerate_coherent_set(s.taxonomy, se)) {
        if (!a[0].is_defer()) continue;
        double r = 0.0;
        for (NodeId v = 0; v < 2; ++v) r += s.risks().table().at(v, a[v].index());
        best = std::min(best, r);
    }
    EXPECT_NEAR(best, 0.50, 1e-12);
    EXPECT_NEAR(defer_parent.risk, 0.50, 1e-12);
    // Nodewise argmin defers the parent.
    EXPECT_EQ(nodewise_bayes_baseline(s.taxonomy, se, s.risks()).actions[0], Action::defer());
}

TEST(BayesCoherent, ProhibitiveDeferCostNeverDefers) {
    Rng rng(44);
    const Contract se = Contract::selective_exclusion();
    for (int trial = 0; trial < 30; ++trial) {
        const Taxonomy t = random_small_tree(rng, 1, 15);
        RiskTable r = random_risks(t.size(), 3, rng);
        ActionTable table = r.table();
        for (NodeId v = 0; v < t.size(); ++v) table.at(v, 2) += 1e6;
        const RiskDecode d = bayes_coherent_decode(t, se, RiskTable(table));
        for (Action a : d.actions) ASSERT_FALSE(a.is_defer());
    }
}

TEST(BayesCoherent, NoWorseThanRepairedNodewiseBaseline) {
    Rng rng(45);
    const Contract se = Contract::selective_exclusion();
    for (int trial = 0; trial < 50; ++trial) {
        const Taxonomy t = random_small_tree(rng, 2, 10);
        const RiskTable r = random_risks(t.size(), 3, rng);
        const RiskDecode d = bayes_coherent_decode(t, se, r);
        ActionVector nw = nodewise_bayes_baseline(t, se, r).actions;
        // Clamp repair: deferred nodes stay deferred, the rest chooses its best assertion under closure.
        std::vector<NodeId> defer;
        for (NodeId v = 0; v < t.size(); ++v)
            if (nw[v].is_defer()) defer.push_back(v);
        const RiskDecode repaired = bayes_budgeted_decode(t, se, r, feasibility_closure(t, se, defer));
        ASSERT_LE(d.risk, repaired.risk + 1e-12);
    }
}

TEST(NodewiseBaseline, CounterexampleFixtures) {
    const Contract se = Contract::selective_exclusion();
    const Scenario dv = reference_scenario("delegation_violation");
    const AuditedDecode a = nodewise_bayes_baseline(dv.taxonomy, se, dv.oracle);
    EXPECT_EQ(a.actions, acts({D, 1}));
    EXPECT_EQ(a.audit.edge_count(DefectClass::DelegationViolation), 1u);
    const Scenario dd = reference_scenario("deductive_defect");
    const AuditedDecode b = nodewise_bayes_baseline(dd.taxonomy, se, dd.oracle);
    EXPECT_EQ(b.actions, acts({0, D}));
    EXPECT_EQ(b.audit.edge_count(DefectClass::DeductiveDefect), 1u);
    // Risk-table form with zero costs agrees.
    EXPECT_EQ(nodewise_bayes_baseline(dv.taxonomy, se, dv.risks()).actions, acts({D, 1}));
    EXPECT_EQ(nodewise_bayes_baseline(dd.taxonomy, se, dd.risks()).actions, acts({0, D}));
}

TEST(NodewiseBaseline, NeverTaxonomicContradictionWhenChildLessLikely) {
    Rng rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 10000; ++i) {
        const double pp = u(rng), pc = pp * u(rng);
        const Action ap = nodewise_oracle_action({pp, u(rng)});
        const Action ac = nodewise_oracle_action({pc, u(rng)});
        ASSERT_FALSE(ap.is_absent() && ac.is_present());
    }
}

TEST(OracleEquivalence, ProjectMapAndActionScores) {
    Rng rng(1001);
    for (const Contract& c : {Contract::selective_exclusion(), Contract::strong_subtree_handoff()})
        for (int trial = 0; trial < 60; ++trial) {
            const Taxonomy t = random_small_tree(rng, 2, 8);
            const PrimitiveTable eta = random_primitives(t.size(), 3, rng);
            const auto logs = log_scores(eta);
            const MapDecode d = project_map(t, c, eta);
            const auto b = oracle::brute_map(t, c, logs);
            ASSERT_EQ(d.score, b.value);
            ASSERT_EQ(d.actions, b.actions);
            const ActionTable v = action_score_table(t, c, eta);
            for (NodeId target = 0; target < t.size(); ++target)
                for (std::size_t a = 0; a < 3; ++a) {
                    std::vector<ActionMask> mask(t.size(), 0b111);
                    mask[target] = 1U << a;
                    double want = kInfeasible;
                    try {
                        want = oracle::brute_map(t, c, logs, mask).value;
                    } catch (const Error&) {
                    }
                    ASSERT_EQ(v.at(target, a), want);
                }
        }
}

TEST(OracleEquivalence, BudgetedTbpAndBayes) {
    Rng rng(1002);
    for (const Contract& c : {Contract::selective_exclusion(), Contract::strong_subtree_handoff()})
        for (int trial = 0; trial < 80; ++trial) {
            const Taxonomy t = random_small_tree(rng, 2, 8);
            const PrimitiveTable eta = random_primitives(t.size(), 3, rng);
            const RiskTable risks = random_risks(t.size(), 3, rng);
            const auto defer = feasibility_closure(t, c, random_subset(t.size(), rng, 0.3));
            const auto mask = masks_for(t, c, defer);

            const MapDecode bd = budgeted_decode(t, c, eta, defer);
            const auto bb = oracle::brute_map(t, c, log_scores(eta), mask);
            ASSERT_EQ(bd.actions, bb.actions);
            ASSERT_EQ(bd.score, bb.value);

            auto tbp = [&](std::span<const Action> a) { return tbp_objective(t, c, eta, a); };
            const MapDecode td = tbp_map_decode(t, c, eta, defer);
            const auto tb = oracle::brute_optimum(t, c, tbp, mask);
            ASSERT_EQ(td.actions, tb.actions);
            ASSERT_EQ(td.score, tb.value);
            const MapDecode tu = tbp_map_decode(t, c, eta);
            const auto tub = oracle::brute_optimum(t, c, tbp);
            ASSERT_EQ(tu.actions, tub.actions);
            ASSERT_EQ(tu.score, tub.value);

            const RiskDecode rd = bayes_coherent_decode(t, c, risks);
            const auto rb = oracle::brute_map(t, c, risks.table().data(), {}, oracle::Sense::Minimise);
            ASSERT_EQ(rd.actions, rb.actions);
            ASSERT_EQ(rd.risk, rb.value);
            const RiskDecode rbd = bayes_budgeted_decode(t, c, risks, defer);
            const auto rbb = oracle::brute_map(t, c, risks.table().data(), mask, oracle::Sense::Minimise);
            ASSERT_EQ(rbd.actions, rbb.actions);
            ASSERT_EQ(rbd.risk, rbb.value);
        }
}

TEST(OracleEquivalence, MultiExpertDecoders) {
    Rng rng(1003);
    for (const Contract& c : {Contract::multi_expert(3), Contract::multi_expert(2, true)})
        for (int trial = 0; trial < 40; ++trial) {
            const Taxonomy t = random_small_tree(rng, 2, 5);
            const PrimitiveTable eta = random_primitives(t.size(), c.action_count(), rng);
            const MapDecode d = project_map(t, c, eta);
            const auto b = oracle::brute_map(t, c, log_scores(eta));
            ASSERT_EQ(d.actions, b.actions);
            ASSERT_EQ(d.score, b.value);
            auto tbp = [&](std::span<const Action> a) { return tbp_objective(t, c, eta, a); };
            const MapDecode td = tbp_map_decode(t, c, eta);
            const auto tb = oracle::brute_optimum(t, c, tbp);
            ASSERT_EQ(td.actions, tb.actions);
            ASSERT_EQ(td.score, tb.value);
            const RiskTable risks = random_risks(t.size(), c.action_count(), rng);
            const RiskDecode rd = bayes_coherent_decode(t, c, risks);
            const auto rb = oracle::brute_map(t, c, risks.table().data(), {}, oracle::Sense::Minimise);
            ASSERT_EQ(rd.actions, rb.actions);
            ASSERT_EQ(rd.risk, rb.value);
        }
}
