#pragma once
// Command-line front end. run_cli returns the process exit status:
// 0 success, 2 coherence check failed (audit) or gradient check failed,
// 1 usage, parse or validation error.

#include <cohdefer/cohdefer.hpp>
#include <cohdefer/io.hpp>
#include <cohdefer/oracle.hpp>

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace cohdefer::cli {

struct ContractFlags {
    std::string kind = "se";
    int experts = 1;
    bool same_expert = false;

    void add_to(CLI::App& app) {
        app.add_option("--contract", kind, "Handoff contract: se | ssh | me")
            ->check(CLI::IsMember({"se", "ssh", "me"}))
            ->capture_default_str();
        app.add_option("--experts", experts, "Number of experts (me only)")->check(CLI::Range(1, Contract::kMaxExperts))->capture_default_str();
        app.add_flag("--same-expert", same_expert, "me: a deferred parent's children may only defer to the same expert");
    }

    Contract build() const {
        if (kind == "se") {
            if (experts != 1) throw Error(ErrorCode::InvalidExpertIndex, "--experts > 1 requires --contract me");
            return Contract::selective_exclusion();
        }
        if (kind == "ssh") {
            if (experts != 1) throw Error(ErrorCode::InvalidExpertIndex, "--experts > 1 requires --contract me");
            return Contract::strong_subtree_handoff();
        }
        return Contract::multi_expert(experts, same_expert);
    }
};

inline Method parse_method(const std::string& m) {
    if (m == "nodewise") return Method::NodewiseBR;
    if (m == "project") return Method::Projection;
    if (m == "tbp-fast") return Method::TBPFast;
    if (m == "tbp-exact") return Method::TBPExact;
    if (m == "bayes") return Method::BayesCoherent;
    throw Error(ErrorCode::ParseError, "unknown method '" + m + "'");
}

inline void emit(const std::string& path, const std::string& text, std::ostream& out) {
    if (path.empty() || path == "-") out << text;
    else io::write_file(path, text);
}

namespace detail {

/// Per-node argmax over every action, lowest index on ties.
inline ActionVector free_argmax(const ActionTable& values) {
    ActionVector a(values.rows());
    for (std::size_t v = 0; v < values.rows(); ++v) {
        const auto r = values.row(v);
        a[v] = Action::from_index(static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin()));
    }
    return a;
}

inline std::vector<std::vector<NodeId>> budget_selection(const Taxonomy& t, const Contract& c, Method method,
                                                         std::vector<EvalInstance> instances, double fraction,
                                                         std::vector<std::vector<NodeId>>& raw) {
    EvaluationSet set{t, c, method, std::move(instances)};
    const std::size_t total = set.instances.size() * t.size();
    const auto threshold = static_cast<std::size_t>(std::nearbyint(fraction * static_cast<double>(total)));
    const auto ranking = rank_decisions(set);
    Selection sel = select_top(set, ranking, threshold);
    raw = std::move(sel.raw);
    return std::move(sel.closed);
}

}  // namespace detail

struct AuditArgs {
    std::string taxonomy, actions, out;
    ContractFlags contract;
};

inline int cmd_audit(const AuditArgs& a, std::ostream& out) {
    const Taxonomy t = io::parse_taxonomy_text(io::read_file(a.taxonomy));
    const Contract c = a.contract.build();
    const auto records = io::parse_actions_csv(io::read_file(a.actions), t, c);
    std::vector<std::pair<std::string, AuditReport>> reports;
    bool incoherent = false;
    for (const auto& r : records) {
        reports.emplace_back(r.id, audit(t, c, r.value));
        incoherent = incoherent || reports.back().second.any_incoherent;
    }
    emit(a.out, io::write_audit(reports, t), out);
    return incoherent ? 2 : 0;
}

struct DecodeArgs {
    std::string taxonomy, primitives, risks, method = "project", out, summary;
    std::optional<double> budget;
    ContractFlags contract;
};

inline int cmd_decode(const DecodeArgs& a, std::ostream& out) {
    const Taxonomy t = io::parse_taxonomy_text(io::read_file(a.taxonomy));
    const Contract c = a.contract.build();
    const Method method = parse_method(a.method);
    if (method != Method::NodewiseBR && method != Method::TBPFast) t.require_tree(a.method);

    std::vector<EvalInstance> instances;
    if (method == Method::BayesCoherent) {
        if (a.risks.empty()) throw Error(ErrorCode::ParseError, "method bayes needs --risks");
        for (auto& r : io::parse_risks_csv(io::read_file(a.risks), t, c)) {
            require_risks(t, c, r.value);
            // Placeholder primitives keep the instance shape uniform; only risks are read.
            instances.push_back({r.id, PrimitiveTable(ActionTable(t.size(), c.action_count(), 1.0 / static_cast<double>(c.action_count()))),
                                 LabelVector(t.size(), 0), {}, std::move(r.value)});
        }
    } else {
        if (a.primitives.empty()) throw Error(ErrorCode::ParseError, "method " + a.method + " needs --primitives");
        for (auto& r : io::parse_primitives_csv(io::read_file(a.primitives), t, c)) {
            require_primitives(t, c, r.value);
            instances.push_back({r.id, std::move(r.value), LabelVector(t.size(), 0), {}, std::nullopt});
        }
    }

    std::vector<std::vector<NodeId>> raw, closed;
    if (a.budget) {
        if (!(*a.budget >= 0.0 && *a.budget <= 1.0)) throw Error(ErrorCode::ParseError, "--budget must be in [0, 1]");
        closed = detail::budget_selection(t, c, method, instances, *a.budget, raw);
    }

    io::ActionRecords records;
    std::string summary = method == Method::BayesCoherent ? "instance_id,risk,raw_deferred,realised_deferred,coherent\n"
                                                          : "instance_id,score,raw_deferred,realised_deferred,coherent\n";
    EvaluationSet set{t, c, method, {}};
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const auto& inst = instances[i];
        ActionVector act;
        double score = 0.0;
        if (a.budget) {
            act = decode_instance(set, inst, closed[i]);
        } else {
            switch (method) {
                case Method::NodewiseBR: act = detail::free_argmax(inst.eta.table()); break;
                case Method::Projection: act = project_map(t, c, inst.eta).actions; break;
                case Method::TBPFast: act = detail::free_argmax(propagate(t, c, inst.eta)); break;
                case Method::TBPExact: act = tbp_map_decode(t, c, inst.eta).actions; break;
                case Method::BayesCoherent: act = bayes_coherent_decode(t, c, *inst.risks).actions; break;
            }
        }
        if (method == Method::BayesCoherent) {
            for (NodeId v = 0; v < t.size(); ++v) score += inst.risks->table().at(v, act[v].index());
        } else if (method == Method::TBPExact || method == Method::TBPFast) {
            score = t.is_dag() ? std::nan("") : std::log(joint_probability(t, c, inst.eta, act));
        } else {
            for (NodeId v = 0; v < t.size(); ++v) score += std::log(inst.eta.at(v, act[v]));
        }
        std::size_t deferred = 0;
        for (const auto& x : act) deferred += x.is_defer() ? 1 : 0;
        const std::size_t raw_n = a.budget ? raw[i].size() : deferred;
        const std::size_t real_n = a.budget ? closed[i].size() : deferred;
        const bool ok = !audit(t, c, act).any_incoherent;
        summary += inst.id + "," + io::format_double(score) + "," + std::to_string(raw_n) + "," + std::to_string(real_n) +
                   "," + (ok ? "1" : "0") + "\n";
        records.push_back({inst.id, std::move(act)});
    }
    emit(a.out, io::write_actions_csv(records, t, c), out);
    if (!a.summary.empty()) io::write_file(a.summary, summary);
    return 0;
}

struct SweepArgs {
    std::string taxonomy, primitives, risks, truth, expert_labels, method = "project", out;
    std::size_t intervals = 101;
    ContractFlags contract;
};

inline int cmd_sweep(const SweepArgs& a, std::ostream& out) {
    const Taxonomy t = io::parse_taxonomy_text(io::read_file(a.taxonomy));
    const Contract c = a.contract.build();
    const Method method = parse_method(a.method);
    t.require_tree("sweep");

    const auto prims = io::parse_primitives_csv(io::read_file(a.primitives), t, c);
    const auto truth = io::parse_labels_csv(io::read_file(a.truth), t, {"y"});
    const auto experts = io::parse_labels_csv(io::read_file(a.expert_labels), t, io::expert_columns(c.experts()));
    std::map<std::string, std::vector<LabelVector>> truth_by, experts_by;
    for (const auto& r : truth) truth_by[r.id] = r.value;
    for (const auto& r : experts) experts_by[r.id] = r.value;
    std::map<std::string, RiskTable> risks_by;
    if (!a.risks.empty())
        for (auto& r : io::parse_risks_csv(io::read_file(a.risks), t, c)) risks_by.emplace(r.id, std::move(r.value));
    if (method == Method::BayesCoherent && a.risks.empty()) throw Error(ErrorCode::ParseError, "method bayes needs --risks");

    EvaluationSet set{t, c, method, {}};
    for (const auto& p : prims) {
        if (!truth_by.contains(p.id)) throw Error(ErrorCode::ShapeMismatch, "no truth labels for instance '" + p.id + "'");
        if (!experts_by.contains(p.id)) throw Error(ErrorCode::ShapeMismatch, "no expert labels for instance '" + p.id + "'");
        std::optional<RiskTable> risk;
        if (auto it = risks_by.find(p.id); it != risks_by.end()) risk = it->second;
        else if (method == Method::BayesCoherent) throw Error(ErrorCode::ShapeMismatch, "no risks for instance '" + p.id + "'");
        set.instances.push_back({p.id, p.value, truth_by[p.id].front(), experts_by[p.id], risk});
    }
    emit(a.out, io::write_sweep(run_sweep(set, a.intervals)), out);
    return 0;
}

struct GradcheckArgs {
    std::uint64_t seed = 7;
    std::size_t nodes = 6;
    std::size_t batch = 4;
    ContractFlags contract;
};

struct GradcheckReport {
    double stage1_error = 0.0;
    double rpo_error = 0.0;
};

/// Random tree, logits and supervised batch; analytic vs central-difference gradients.
inline GradcheckReport gradcheck(std::uint64_t seed, std::size_t nodes, std::size_t batch_size, const Contract& c) {
    Rng rng(seed);
    const Taxonomy t = random_tree(nodes, 3, rng());
    std::normal_distribution<double> gauss(0.0, 1.0);
    ActionTable theta(t.size(), c.action_count());
    for (double& x : theta.data()) x = gauss(rng);
    const ExpertModel experts = ExpertModel::uniform(static_cast<std::size_t>(c.experts()), t.size(), 0.7);
    std::vector<SupervisedInstance> batch;
    for (std::size_t i = 0; i < batch_size; ++i) {
        LabelVector y = sample_labels(t, LabelSpec{0.6, 0.6}, rng);
        auto m = sample_expert_labels(t, y, experts, rng);
        batch.push_back({std::move(y), std::move(m), std::nullopt});
    }
    auto check = [&](auto objective) {
        const Objective analytic = objective(theta);
        auto f = [&](std::span<const double> x) {
            ActionTable th(theta.rows(), theta.arity(), std::vector<double>(x.begin(), x.end()));
            return objective(th).value;
        };
        const auto numeric = oracle::finite_difference(f, theta.data(), 1e-5);
        return oracle::max_relative_error(analytic.gradient.data(), numeric);
    };
    GradcheckReport r;
    r.stage1_error = check([&](const ActionTable& th) { return stage1_objective(th, batch); });
    r.rpo_error = check([&](const ActionTable& th) { return rpo_objective(th, t, c, batch); });
    return r;
}

inline int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
    const Contract c = a.contract.build();
    const GradcheckReport r = gradcheck(a.seed, a.nodes, a.batch, c);
    const double worst = std::max(r.stage1_error, r.rpo_error);
    out << "objective,max_relative_error\n";
    out << "stage1," << io::format_double(r.stage1_error) << "\n";
    out << "rpo," << io::format_double(r.rpo_error) << "\n";
    if (a.nodes == 1) out << "# single node: rpo and stage1 objectives coincide\n";
    out << (worst < 1e-5 ? "PASS" : "FAIL") << "\n";
    return worst < 1e-5 ? 0 : 2;
}

struct DescendArgs {
    std::size_t steps = 200;
    double rate = 0.05;
    std::string objective = "rpo";
};

/// Gradient descent on the two-node option-value batch, starting from the
/// stage-1 optimum; reports the trajectory and the decoded policy's risk.
inline int cmd_descend(const DescendArgs& a, std::ostream& out) {
    const Scenario s = reference_scenario("option_value");
    const Contract c = Contract::selective_exclusion();
    const auto batch = option_value_batch();
    const ActionTable theta0(2, 3, {std::log(0.05), std::log(0.45), std::log(0.5), std::log(0.0625), std::log(0.5625), std::log(0.375)});
    const ObjectiveKind kind = a.objective == "stage1" ? ObjectiveKind::Stage1 : ObjectiveKind::Rpo;
    const DescentResult r = gradient_descent_demo(theta0, s.taxonomy, c, batch, a.steps, a.rate, kind);
    out << "step,objective\n";
    for (std::size_t i = 0; i < r.trajectory.size(); ++i) out << i << "," << io::format_double(r.trajectory[i]) << "\n";
    const PrimitiveTable eta = primitives_from_logits(r.theta);
    const ActionVector act = tbp_map_decode(s.taxonomy, c, eta).actions;
    const RiskTable risks = s.risks();
    double risk = 0.0;
    for (NodeId v = 0; v < 2; ++v) risk += risks.table().at(v, act[v].index());
    out << "# decoded " << to_string(act[0]) << "," << to_string(act[1]) << " risk " << io::format_double(risk) << "\n";
    return 0;
}

struct ScenarioArgs {
    std::string name, dir = ".";
};

/// Writes taxonomy.csv, primitives.csv (eta proportional to (1 - pi, pi, q))
/// and risks.csv for a named scenario.
inline int cmd_scenario(const ScenarioArgs& a, std::ostream& out) {
    const Contract c = Contract::selective_exclusion();
    std::vector<Scenario> chosen;
    for (auto& s : reference_scenarios())
        if (a.name.empty() || a.name == "all" || s.name == a.name) chosen.push_back(s);
    if (chosen.empty()) throw Error(ErrorCode::UnknownNode, "unknown scenario '" + a.name + "'");
    std::filesystem::create_directories(a.dir);
    for (const auto& s : chosen) {
        const auto base = std::filesystem::path(a.dir) / s.name;
        std::filesystem::create_directories(base);
        io::write_file((base / "taxonomy.csv").string(), io::write_taxonomy_csv(s.taxonomy));
        ActionTable eta(2, 3);
        for (NodeId v = 0; v < 2; ++v) {
            const double z = 1.0 + s.oracle[v].q;
            eta.at(v, 0) = (1.0 - s.oracle[v].pi) / z;
            eta.at(v, 1) = s.oracle[v].pi / z;
            eta.at(v, 2) = s.oracle[v].q / z;
        }
        io::write_file((base / "primitives.csv").string(), io::write_primitives_csv({{s.name, PrimitiveTable(eta)}}, s.taxonomy, c));
        io::write_file((base / "risks.csv").string(), io::write_risks_csv({{s.name, s.risks()}}, s.taxonomy, c));
        out << base.string() << "\n";
    }
    return 0;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Coherent hierarchical learning-to-defer: audit, decode, sweep and gradient checks"};
    app.require_subcommand(1);

    AuditArgs audit_args;
    auto* audit_cmd = app.add_subcommand("audit", "Classify every edge of every action vector; exit 0 if coherent, 2 if not");
    audit_cmd->add_option("--taxonomy", audit_args.taxonomy, "child,parent CSV or nested JSON document")->required();
    audit_cmd->add_option("--actions", audit_args.actions, "instance_id,node,action CSV")->required();
    audit_cmd->add_option("--out", audit_args.out, "Report path (default: standard output)");
    audit_args.contract.add_to(*audit_cmd);

    DecodeArgs decode_args;
    auto* decode_cmd = app.add_subcommand("decode", "Decode actions per instance");
    decode_cmd->add_option("--taxonomy", decode_args.taxonomy, "child,parent CSV or nested JSON document")->required();
    decode_cmd->add_option("--primitives", decode_args.primitives, "instance_id,node,p0,p1,pd[1..E] CSV");
    decode_cmd->add_option("--risks", decode_args.risks, "instance_id,node,r0,r1,rd[1..E] CSV (method bayes)");
    decode_cmd->add_option("--method", decode_args.method, "nodewise | project | tbp-fast | tbp-exact | bayes")
        ->check(CLI::IsMember({"nodewise", "project", "tbp-fast", "tbp-exact", "bayes"}))
        ->capture_default_str();
    decode_cmd->add_option("--budget", decode_args.budget, "Global defer budget as a fraction of all decisions, in [0, 1]");
    decode_cmd->add_option("--out", decode_args.out, "Actions path (default: standard output)");
    decode_cmd->add_option("--summary", decode_args.summary,
                           "Sidecar CSV: instance_id,score|risk,raw_deferred,realised_deferred,coherent");
    decode_args.contract.add_to(*decode_cmd);

    SweepArgs sweep_args;
    auto* sweep_cmd = app.add_subcommand(
        "sweep",
        "Budget sweep. Output columns kind,threshold,budget_fraction,metric,value; kind is point (per threshold and "
        "metric), auc, closure or meta");
    sweep_cmd->add_option("--taxonomy", sweep_args.taxonomy, "child,parent CSV or nested JSON document")->required();
    sweep_cmd->add_option("--primitives", sweep_args.primitives, "instance_id,node,p0,p1,pd[1..E] CSV")->required();
    sweep_cmd->add_option("--truth", sweep_args.truth, "instance_id,node,y CSV")->required();
    sweep_cmd->add_option("--expert-labels", sweep_args.expert_labels, "instance_id,node,m1..mE CSV")->required();
    sweep_cmd->add_option("--risks", sweep_args.risks, "instance_id,node,r0,r1,rd[1..E] CSV (method bayes)");
    sweep_cmd->add_option("--method", sweep_args.method, "nodewise | project | tbp-fast | tbp-exact | bayes")
        ->check(CLI::IsMember({"nodewise", "project", "tbp-fast", "tbp-exact", "bayes"}))
        ->capture_default_str();
    sweep_cmd->add_option("--intervals", sweep_args.intervals, "Budget grid intervals")->check(CLI::PositiveNumber)->capture_default_str();
    sweep_cmd->add_option("--out", sweep_args.out, "Table path (default: standard output)");
    sweep_args.contract.add_to(*sweep_cmd);

    GradcheckArgs grad_args;
    auto* grad_cmd = app.add_subcommand("gradcheck", "Analytic vs finite-difference gradients; exit 0 iff error < 1e-5");
    grad_cmd->add_option("--seed", grad_args.seed, "Random seed")->capture_default_str();
    grad_cmd->add_option("--nodes", grad_args.nodes, "Tree size")->check(CLI::PositiveNumber)->capture_default_str();
    grad_cmd->add_option("--batch", grad_args.batch, "Supervised instances")->check(CLI::PositiveNumber)->capture_default_str();
    grad_args.contract.add_to(*grad_cmd);

    DescendArgs descend_args;
    auto* descend_cmd = app.add_subcommand("descend", "Gradient descent on the two-node option-value batch");
    descend_cmd->add_option("--steps", descend_args.steps, "Steps")->capture_default_str();
    descend_cmd->add_option("--rate", descend_args.rate, "Step size")->capture_default_str();
    descend_cmd->add_option("--objective", descend_args.objective, "stage1 | rpo")
        ->check(CLI::IsMember({"stage1", "rpo"}))
        ->capture_default_str();

    ScenarioArgs scenario_args;
    auto* scenario_cmd = app.add_subcommand("scenario", "Write the named two-node fixtures as input files");
    scenario_cmd->add_option("--name", scenario_args.name, "delegation_violation | deductive_defect | option_value | all");
    scenario_cmd->add_option("--dir", scenario_args.dir, "Output directory")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? 0 : 1;
    }

    try {
        if (*audit_cmd) return cmd_audit(audit_args, out);
        if (*decode_cmd) return cmd_decode(decode_args, out);
        if (*sweep_cmd) return cmd_sweep(sweep_args, out);
        if (*grad_cmd) return cmd_gradcheck(grad_args, out);
        if (*descend_cmd) return cmd_descend(descend_args, out);
        if (*scenario_cmd) return cmd_scenario(scenario_args, out);
    } catch (const Error& e) {
        err << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace cohdefer::cli
