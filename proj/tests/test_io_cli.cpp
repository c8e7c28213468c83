#include "support.hpp"

#include <cli.hpp>
#include <cohdefer/io.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

using namespace cohdefer;
using namespace cohdefer::test;
namespace fs = std::filesystem;

namespace {

std::string parse_error(auto&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

struct CliRun {
    int code;
    std::string out, err;
};

CliRun run_cmd(std::vector<std::string> args) {
    args.insert(args.begin(), "cohdefer");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

class TempDir : public ::testing::Test {
protected:
    void SetUp() override {
        dir = fs::temp_directory_path() / ("cohdefer_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }
    std::string file(const std::string& name, const std::string& text) {
        const auto p = (dir / name).string();
        io::write_file(p, text);
        return p;
    }
    fs::path dir;
};

const char* kLungCsv = "child,parent\nLungOpacity,ROOT\nEdema,LungOpacity\nInfiltration,LungOpacity\nConsolidation,LungOpacity\n";

}  // namespace

TEST(FormatDouble, RoundTrips) {
    for (double x : {0.1, 1.0 / 3.0, 0.48, 1e-300, -2.5, 0.0}) EXPECT_EQ(std::strtod(io::format_double(x).c_str(), nullptr), x);
    EXPECT_EQ(io::format_double(0.25), "0.25");
}

TEST(TaxonomyIo, CsvAndJsonAgree) {
    const Taxonomy a = io::parse_taxonomy_text(kLungCsv);
    const Taxonomy b = io::parse_taxonomy_text(R"({"LungOpacity": {"Edema": null, "Infiltration": {}, "Consolidation": null}})");
    ASSERT_EQ(a.size(), b.size());
    for (NodeId v = 0; v < a.size(); ++v) {
        EXPECT_EQ(a.name(v), b.name(v));
        EXPECT_EQ(a.parent(v), b.parent(v));
    }
    EXPECT_EQ(io::write_taxonomy_csv(a), kLungCsv);
    const Taxonomy noheader = io::parse_taxonomy_csv("a,ROOT\n\n b , a \n");
    EXPECT_EQ(noheader.name(1), "b");
    const Taxonomy dag = io::parse_taxonomy_text(R"({"a": {"c": {"d": null}}, "b": {"c": {"d": null}}})");
    EXPECT_EQ(dag.kind(), TaxonomyKind::Dag);
    EXPECT_EQ(dag.size(), 4u);
}

TEST(TaxonomyIo, ErrorsCarryLineNumbers) {
    EXPECT_NE(parse_error([] { io::parse_taxonomy_csv("child,parent\na,ROOT\nb,a,x\n"); }).find("line 3"), std::string::npos);
    EXPECT_NE(parse_error([] { io::parse_taxonomy_csv("a,ROOT\n\n,a\n"); }).find("line 3"), std::string::npos);
    EXPECT_THROW(io::parse_taxonomy_text("{\"a\": 3}"), Error);
    EXPECT_THROW(io::parse_taxonomy_text("{\"a\": "), Error);
    try {
        io::parse_taxonomy_csv("a,b\nb,a\n");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::CycleDetected);
    }
}

TEST(ActionsIo, RoundTripAndErrors) {
    const Taxonomy t = lung_subtree();
    const Contract se = Contract::selective_exclusion();
    const io::ActionRecords recs = {{"x", acts({D, 1, 0, 0})}, {"y", acts({1, 1, 0, D})}};
    const std::string text = io::write_actions_csv(recs, t, se);
    const auto back = io::parse_actions_csv(text, t, se);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].id, "x");
    EXPECT_EQ(back[0].value, recs[0].value);
    EXPECT_EQ(back[1].value, recs[1].value);

    const std::string head = "instance_id,node,action\n";
    EXPECT_NE(parse_error([&] { io::parse_actions_csv(head + "x,Edema,7\n", t, se); }).find("line 2"), std::string::npos);
    EXPECT_NE(parse_error([&] { io::parse_actions_csv(head + "x,Nope,1\n", t, se); }).find("unknown node"), std::string::npos);
    EXPECT_NE(parse_error([&] { io::parse_actions_csv(head + "x,Edema,1\nx,Edema,0\n", t, se); }).find("line 3"),
              std::string::npos);
    EXPECT_NE(parse_error([&] { io::parse_actions_csv(head + "x,Edema,1\n", t, se); }).find("no row"), std::string::npos);
    EXPECT_NE(parse_error([&] { io::parse_actions_csv("id,node,action\n", t, se); }).find("line 1"), std::string::npos);

    const Contract me = Contract::multi_expert(3);
    const auto m = io::parse_actions_csv(head + "z,p,D3\nz,c,D\n", pair_tree(), me);
    EXPECT_EQ(m[0].value[0], Action::defer(3));
    EXPECT_EQ(m[0].value[1], Action::defer(1));
    EXPECT_THROW(io::parse_actions_csv(head + "z,p,D4\nz,c,0\n", pair_tree(), me), Error);
}

TEST(TablesIo, PrimitivesRisksLabelsRoundTrip) {
    const Taxonomy t = pair_tree();
    const Contract me = Contract::multi_expert(2);
    Rng rng(3);
    const io::PrimitiveRecords p = {{"a", random_primitives(2, 4, rng)}};
    const auto pb = io::parse_primitives_csv(io::write_primitives_csv(p, t, me), t, me);
    for (NodeId v = 0; v < 2; ++v)
        for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(pb[0].value.row(v)[k], p[0].value.row(v)[k]);
    EXPECT_EQ(io::action_columns("p", me), (std::vector<std::string>{"p0", "p1", "pd1", "pd2"}));

    const io::RiskRecords r = {{"a", random_risks(2, 4, rng)}};
    const auto rb = io::parse_risks_csv(io::write_risks_csv(r, t, me), t, me);
    EXPECT_EQ(rb[0].value.table().at(1, 3), r[0].value.table().at(1, 3));

    const io::LabelRecords l = {{"a", {{1, 0}, {1, 1}}}};
    const auto cols = io::expert_columns(2);
    EXPECT_EQ(io::parse_labels_csv(io::write_labels_csv(l, t, cols), t, cols)[0].value, l[0].value);
    EXPECT_THROW(io::parse_labels_csv("instance_id,node,m1,m2\na,p,1,2\na,c,0,0\n", t, cols), Error);

    const Contract se = Contract::selective_exclusion();
    EXPECT_NE(parse_error([&] { io::parse_primitives_csv("instance_id,node,p0,p1,pd\na,p,0.2,x,0.3\na,c,1,0,0\n", t, se); })
                  .find("line 2"),
              std::string::npos);
    EXPECT_THROW(io::parse_primitives_csv("instance_id,node,p0,p1,pd\na,p,0.2,0.2,0.3\na,c,1,0,0\n", t, se), Error);
}

TEST(Reports, AuditAndSweepLayout) {
    const Taxonomy t = pair_tree();
    const Contract se = Contract::selective_exclusion();
    const std::string a = io::write_audit({{"x", audit(t, se, acts({D, 1}))}}, t);
    EXPECT_EQ(a.rfind("instance_id,parent,child,class\nx,p,c,", 0), 0u);
    EXPECT_NE(a.find("\n\nview,class,count\n"), std::string::npos);
    EXPECT_NE(a.find("edge,handoff_escape,0\n"), std::string::npos);

    const EvaluationSet set{t, se, Method::Projection, make_synthetic_instances(t, se, 3, 1)};
    const std::string s = io::write_sweep(run_sweep(set));
    EXPECT_EQ(s.rfind("kind,threshold,budget_fraction,metric,value\npoint,0,0,sys_balanced_accuracy,", 0), 0u);
    EXPECT_NE(s.find("meta,,,f1_empty_convention,0\n"), std::string::npos);
    EXPECT_NE(s.find("meta,,,total_decisions,6\n"), std::string::npos);
    EXPECT_NE(s.find("auc,,,edge_any,0\n"), std::string::npos);
}

using Cli = TempDir;

TEST_F(Cli, AuditExitCodes) {
    const auto tax = file("t.csv", kLungCsv);
    const auto good = file("good.csv", "instance_id,node,action\nx,LungOpacity,1\nx,Edema,1\nx,Infiltration,0\nx,Consolidation,D\n");
    const auto bad = file("bad.csv", "instance_id,node,action\nx,LungOpacity,D\nx,Edema,1\nx,Infiltration,0\nx,Consolidation,0\n");
    EXPECT_EQ(run_cmd({"audit", "--taxonomy", tax, "--actions", good}).code, 0);
    const CliRun r = run_cmd({"audit", "--taxonomy", tax, "--actions", bad});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("x,LungOpacity,Edema,"), std::string::npos);
    EXPECT_EQ(run_cmd({"audit", "--taxonomy", tax, "--actions", (dir / "missing.csv").string()}).code, 1);
    EXPECT_EQ(run_cmd({"audit", "--taxonomy", tax}).code, 1);
    EXPECT_EQ(run_cmd({"--help"}).code, 0);
    const CliRun mal = run_cmd({"audit", "--taxonomy", tax, "--actions", file("m.csv", "instance_id,node,action\nx,Edema,Q\n")});
    EXPECT_EQ(mal.code, 1);
    EXPECT_NE(mal.err.find("line 2"), std::string::npos);
    EXPECT_EQ(run_cmd({"bogus"}).code, 1);
}

TEST_F(Cli, ScenarioThenDecodeReproducesCounterexamples) {
    ASSERT_EQ(run_cmd({"scenario", "--name", "all", "--dir", dir.string()}).code, 0);
    auto decode = [&](const std::string& name, const std::string& method, std::vector<std::string> extra = {}) {
        const auto base = dir / name;
        std::vector<std::string> args = {"decode", "--taxonomy", (base / "taxonomy.csv").string(), "--method", method};
        if (method == "bayes") args.insert(args.end(), {"--risks", (base / "risks.csv").string()});
        else args.insert(args.end(), {"--primitives", (base / "primitives.csv").string()});
        args.insert(args.end(), extra.begin(), extra.end());
        return run_cmd(args);
    };
    const CliRun dv = decode("delegation_violation", "nodewise");
    ASSERT_EQ(dv.code, 0) << dv.err;
    EXPECT_NE(dv.out.find("delegation_violation,p,D\n"), std::string::npos);
    EXPECT_NE(dv.out.find("delegation_violation,c,1\n"), std::string::npos);
    const CliRun dd = decode("deductive_defect", "nodewise");
    EXPECT_NE(dd.out.find("deductive_defect,p,0\n"), std::string::npos);
    EXPECT_NE(dd.out.find("deductive_defect,c,D\n"), std::string::npos);

    const auto summary = (dir / "summary.csv").string();
    const CliRun ov = decode("option_value", "bayes", {"--summary", summary});
    ASSERT_EQ(ov.code, 0) << ov.err;
    EXPECT_NE(ov.out.find("option_value,p,1\n"), std::string::npos);
    EXPECT_NE(ov.out.find("option_value,c,1\n"), std::string::npos);
    const std::string sum = io::read_file(summary);
    const auto at = sum.find("option_value,");
    ASSERT_NE(at, std::string::npos);
    EXPECT_NEAR(std::strtod(sum.c_str() + at + 13, nullptr), 0.2, 1e-12);

    const CliRun all = decode("option_value", "project", {"--budget", "1.0"});
    EXPECT_NE(all.out.find("option_value,p,D\n"), std::string::npos);
    EXPECT_NE(all.out.find("option_value,c,D\n"), std::string::npos);
    EXPECT_EQ(decode("option_value", "project", {"--budget", "1.5"}).code, 1);
}

TEST_F(Cli, SweepWritesTableWithRequestedGrid) {
    const Taxonomy t = lung_subtree();
    const Contract se = Contract::selective_exclusion();
    const auto xs = make_synthetic_instances(t, se, 4, 2);
    io::PrimitiveRecords p;
    io::LabelRecords truth, experts;
    for (const auto& x : xs) {
        p.push_back({x.id, x.eta});
        truth.push_back({x.id, {x.truth}});
        experts.push_back({x.id, x.experts});
    }
    const auto tax = file("t.csv", io::write_taxonomy_csv(t));
    const auto pr = file("p.csv", io::write_primitives_csv(p, t, se));
    const auto tr = file("y.csv", io::write_labels_csv(truth, t, {"y"}));
    const auto ex = file("m.csv", io::write_labels_csv(experts, t, io::expert_columns(1)));
    const CliRun r = run_cmd({"sweep", "--taxonomy", tax, "--primitives", pr, "--truth", tr, "--expert-labels", ex, "--method",
                       "project", "--intervals", "1"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("point,0,0,edge_any,0\n"), std::string::npos);
    EXPECT_NE(r.out.find("point,16,1,edge_any,0\n"), std::string::npos);
    EXPECT_EQ(r.out.find("point,8,"), std::string::npos);
    EXPECT_NE(r.out.find("meta,,,total_decisions,16\n"), std::string::npos);
}

TEST_F(Cli, GradcheckAndDescend) {
    const CliRun g = run_cmd({"gradcheck", "--seed", "3", "--nodes", "6", "--batch", "4"});
    EXPECT_EQ(g.code, 0) << g.out;
    EXPECT_NE(g.out.find("PASS"), std::string::npos);
    const CliRun single = run_cmd({"gradcheck", "--nodes", "1", "--contract", "me", "--experts", "2"});
    EXPECT_EQ(single.code, 0);
    EXPECT_NE(single.out.find("# single node"), std::string::npos);
    EXPECT_EQ(run_cmd({"gradcheck", "--experts", "2"}).code, 1);
    const CliRun d = run_cmd({"descend"});
    EXPECT_EQ(d.code, 0);
    const auto at = d.out.find("# decoded 1,1 risk ");
    ASSERT_NE(at, std::string::npos);
    EXPECT_NEAR(std::strtod(d.out.c_str() + at + 19, nullptr), 0.2, 1e-12);
}
