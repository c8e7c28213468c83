#pragma once
// Comma-separated text formats for taxonomies, action vectors, primitive and
// risk tables, label matrices, audit reports and sweep tables, plus the
// nested-object taxonomy document. Parse failures carry 1-based line numbers.

#include "coherence.hpp"
#include "contract.hpp"
#include "decode.hpp"
#include "error.hpp"
#include "eval.hpp"
#include "taxonomy.hpp"
#include "tbp.hpp"

#include <json.hpp>

#include <array>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cohdefer::io {

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double x) {
    char buf[32];
    for (int precision = 15; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof buf, "%.*g", precision, x);
        if (std::strtod(buf, nullptr) == x) break;
    }
    return buf;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::ParseError, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::ParseError, "cannot write '" + path + "'");
    out << text;
}

struct CsvRow {
    std::size_t line = 0;
    std::vector<std::string> fields;
};

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

/// Splits text into rows of trimmed fields; blank lines are skipped.
inline std::vector<CsvRow> split_csv(std::string_view text) {
    std::vector<CsvRow> rows;
    std::size_t line = 0, pos = 0;
    if (text.starts_with("\xEF\xBB\xBF")) pos = 3;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        ++line;
        const std::string_view raw = text.substr(pos, end - pos);
        if (!trim(raw).empty()) {
            CsvRow row{line, {}};
            std::size_t start = 0;
            while (true) {
                const auto comma = raw.find(',', start);
                row.fields.push_back(trim(raw.substr(start, comma == std::string_view::npos ? raw.size() - start : comma - start)));
                if (comma == std::string_view::npos) break;
                start = comma + 1;
            }
            rows.push_back(std::move(row));
        }
        if (end == text.size()) break;
        pos = end + 1;
    }
    return rows;
}

[[noreturn]] inline void fail(std::size_t line, const std::string& what) {
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + what);
}

inline double parse_number(const std::string& s, std::size_t line) {
    if (s.empty()) fail(line, "empty numeric field");
    errno = 0;
    char* end = nullptr;
    const double x = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || errno == ERANGE) fail(line, "'" + s + "' is not a number");
    return x;
}

// ---------------------------------------------------------------- taxonomy

/// `child,parent` records, optional header, ROOT marks roots; a child listed
/// under several parents makes a DAG.
inline Taxonomy parse_taxonomy_csv(std::string_view text) {
    const auto rows = split_csv(text);
    std::vector<ParentLink> links;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.fields.size() != 2) fail(r.line, "expected 2 fields 'child,parent', found " + std::to_string(r.fields.size()));
        if (i == 0 && r.fields[0] == "child" && r.fields[1] == "parent") continue;
        if (r.fields[0].empty() || r.fields[1].empty()) fail(r.line, "empty node name");
        links.push_back({r.fields[0], r.fields[1]});
    }
    try {
        return Taxonomy::from_links(links);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::ParseError) throw;
        throw Error(e.code(), std::string("taxonomy: ") + e.what());
    }
}

/// Nested objects: each key is a node, its value the object of its children.
/// A name appearing under several parents becomes a DAG node.
inline Taxonomy parse_taxonomy_json(std::string_view text) {
    nlohmann::ordered_json doc;
    try {
        doc = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::ParseError, std::string("taxonomy document: ") + e.what());
    }
    if (!doc.is_object()) throw Error(ErrorCode::ParseError, "taxonomy document must be an object");
    std::vector<ParentLink> links;
    auto visit = [&](const nlohmann::ordered_json& obj, const std::string& parent, auto& self) -> void {
        for (const auto& [name, children] : obj.items()) {
            if (!children.is_object() && !children.is_null())
                throw Error(ErrorCode::ParseError, "node '" + name + "' must map to an object of children");
            links.push_back({name, parent});
            if (children.is_object()) self(children, name, self);
        }
    };
    visit(doc, std::string(kSentinel), visit);
    // A DAG child nested under several parents appears once per parent; its
    // subtree links are duplicated and dropped here.
    std::vector<ParentLink> unique;
    std::map<std::pair<std::string, std::string>, bool> seen;
    for (auto& l : links)
        if (!seen.contains({l.child, l.parent})) {
            seen[{l.child, l.parent}] = true;
            unique.push_back(std::move(l));
        }
    return Taxonomy::from_links(unique);
}

/// Dispatches on the first non-space character: '{' means the nested document.
inline Taxonomy parse_taxonomy_text(std::string_view text) {
    const auto first = text.find_first_not_of(" \t\r\n\xEF\xBB\xBF");
    if (first != std::string_view::npos && text[first] == '{') return parse_taxonomy_json(text);
    return parse_taxonomy_csv(text);
}

/// Header row then one record per (node, parent) in node order.
inline std::string write_taxonomy_csv(const Taxonomy& t) {
    std::string out = "child,parent\n";
    for (NodeId v = 0; v < t.size(); ++v) {
        if (t.is_root(v)) {
            out += t.name(v) + "," + std::string(kSentinel) + "\n";
            continue;
        }
        for (NodeId p : t.parents(v)) out += t.name(v) + "," + t.name(p) + "\n";
    }
    return out;
}

// ----------------------------------------------------------------- actions

inline Action parse_action(const std::string& s, const Contract& c, std::size_t line) {
    if (s == "0") return Action::absent();
    if (s == "1") return Action::present();
    if (s == "D") return Action::defer(1);
    if (s.size() > 1 && s[0] == 'D') {
        const double e = parse_number(s.substr(1), line);
        if (e >= 1 && e <= c.experts() && e == std::floor(e)) return Action::defer(static_cast<int>(e));
    }
    fail(line, "'" + s + "' is not an action for contract " + c.name());
}

inline std::string format_action(Action a, const Contract& c) { return to_string(a, c.experts()); }

template <class Row>
struct InstanceBlock {
    std::string id;
    Row value;
};

using ActionRecords = std::vector<InstanceBlock<ActionVector>>;

namespace detail {

/// Groups rows by instance_id (first-appearance order) and checks that each
/// instance names every node exactly once.
template <class F>
void group_rows(const Taxonomy& t, const std::vector<CsvRow>& rows, std::size_t first, std::size_t width, F&& on_row,
                std::vector<std::string>& ids) {
    std::unordered_map<std::string, std::size_t> slot;
    std::vector<std::vector<std::uint8_t>> seen;
    std::vector<std::size_t> first_line;
    for (std::size_t i = first; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.fields.size() != width)
            fail(r.line, "expected " + std::to_string(width) + " fields, found " + std::to_string(r.fields.size()));
        if (r.fields[0].empty()) fail(r.line, "empty instance_id");
        if (!t.contains(r.fields[1])) fail(r.line, "unknown node '" + r.fields[1] + "'");
        auto [it, inserted] = slot.emplace(r.fields[0], ids.size());
        if (inserted) {
            ids.push_back(r.fields[0]);
            seen.emplace_back(t.size(), 0);
            first_line.push_back(r.line);
        }
        const NodeId v = t.index_of(r.fields[1]);
        if (seen[it->second][v]) fail(r.line, "node '" + r.fields[1] + "' repeated for instance '" + r.fields[0] + "'");
        seen[it->second][v] = 1;
        on_row(it->second, v, r);
    }
    for (std::size_t k = 0; k < ids.size(); ++k)
        for (NodeId v = 0; v < t.size(); ++v)
            if (!seen[k][v])
                fail(first_line[k], "instance '" + ids[k] + "' has no row for node '" + t.name(v) + "'");
}

inline void expect_header(const std::vector<CsvRow>& rows, const std::vector<std::string>& header) {
    if (rows.empty()) throw Error(ErrorCode::ParseError, "line 1: file is empty");
    if (rows[0].fields != header) {
        std::string want;
        for (const auto& h : header) want += (want.empty() ? "" : ",") + h;
        fail(rows[0].line, "expected header '" + want + "'");
    }
}

}  // namespace detail

/// `instance_id,node,action` with header; actions 0, 1, D or D1..DE.
inline ActionRecords parse_actions_csv(std::string_view text, const Taxonomy& t, const Contract& c) {
    const auto rows = split_csv(text);
    detail::expect_header(rows, {"instance_id", "node", "action"});
    std::vector<std::string> ids;
    std::vector<ActionVector> vecs;
    detail::group_rows(
        t, rows, 1, 3,
        [&](std::size_t k, NodeId v, const CsvRow& r) {
            if (k == vecs.size()) vecs.emplace_back(t.size(), Action::absent());
            vecs[k][v] = parse_action(r.fields[2], c, r.line);
        },
        ids);
    ActionRecords out;
    for (std::size_t k = 0; k < ids.size(); ++k) out.push_back({ids[k], std::move(vecs[k])});
    return out;
}

inline std::string write_actions_csv(const ActionRecords& records, const Taxonomy& t, const Contract& c) {
    std::string out = "instance_id,node,action\n";
    for (const auto& r : records)
        for (NodeId v = 0; v < t.size(); ++v) out += r.id + "," + t.name(v) + "," + format_action(r.value[v], c) + "\n";
    return out;
}

// -------------------------------------------------------- numeric tables

/// Column names after instance_id,node for a table with `prefix` entries:
/// prefix0, prefix1, then prefixd (one expert) or prefixd1..prefixdE.
inline std::vector<std::string> action_columns(std::string_view prefix, const Contract& c) {
    std::vector<std::string> cols = {std::string(prefix) + "0", std::string(prefix) + "1"};
    if (c.experts() == 1) {
        cols.push_back(std::string(prefix) + "d");
    } else {
        for (int e = 1; e <= c.experts(); ++e) cols.push_back(std::string(prefix) + "d" + std::to_string(e));
    }
    return cols;
}

/// Generic `instance_id,node,<columns...>` reader into one table per instance.
inline std::vector<InstanceBlock<ActionTable>> parse_node_table(std::string_view text, const Taxonomy& t,
                                                               const std::vector<std::string>& columns) {
    const auto rows = split_csv(text);
    std::vector<std::string> header = {"instance_id", "node"};
    header.insert(header.end(), columns.begin(), columns.end());
    detail::expect_header(rows, header);
    std::vector<std::string> ids;
    std::vector<ActionTable> tables;
    std::vector<std::size_t> lines;
    detail::group_rows(
        t, rows, 1, header.size(),
        [&](std::size_t k, NodeId v, const CsvRow& r) {
            if (k == tables.size()) tables.emplace_back(t.size(), columns.size());
            for (std::size_t j = 0; j < columns.size(); ++j) tables[k].at(v, j) = parse_number(r.fields[2 + j], r.line);
        },
        ids);
    std::vector<InstanceBlock<ActionTable>> out;
    for (std::size_t k = 0; k < ids.size(); ++k) out.push_back({ids[k], std::move(tables[k])});
    return out;
}

inline std::string write_node_table(const std::vector<InstanceBlock<ActionTable>>& blocks, const Taxonomy& t,
                                    const std::vector<std::string>& columns) {
    std::string out = "instance_id,node";
    for (const auto& c : columns) out += "," + c;
    out += "\n";
    for (const auto& b : blocks)
        for (NodeId v = 0; v < t.size(); ++v) {
            out += b.id + "," + t.name(v);
            for (double x : b.value.row(v)) out += "," + format_double(x);
            out += "\n";
        }
    return out;
}

using PrimitiveRecords = std::vector<InstanceBlock<PrimitiveTable>>;
using RiskRecords = std::vector<InstanceBlock<RiskTable>>;

/// `instance_id,node,p0,p1,pd` (or pd1..pdE); rows are validated at intake.
inline PrimitiveRecords parse_primitives_csv(std::string_view text, const Taxonomy& t, const Contract& c) {
    PrimitiveRecords out;
    for (auto& b : parse_node_table(text, t, action_columns("p", c))) {
        try {
            out.push_back({b.id, PrimitiveTable(std::move(b.value))});
        } catch (const Error& e) {
            throw Error(e.code(), "instance '" + b.id + "': " + e.what());
        }
    }
    return out;
}

inline std::string write_primitives_csv(const PrimitiveRecords& records, const Taxonomy& t, const Contract& c) {
    std::vector<InstanceBlock<ActionTable>> blocks;
    for (const auto& r : records) blocks.push_back({r.id, r.value.table()});
    return write_node_table(blocks, t, action_columns("p", c));
}

/// `instance_id,node,r0,r1,rd` (or rd1..rdE).
inline RiskRecords parse_risks_csv(std::string_view text, const Taxonomy& t, const Contract& c) {
    RiskRecords out;
    for (auto& b : parse_node_table(text, t, action_columns("r", c))) {
        try {
            out.push_back({b.id, RiskTable(std::move(b.value))});
        } catch (const Error& e) {
            throw Error(e.code(), "instance '" + b.id + "': " + e.what());
        }
    }
    return out;
}

inline std::string write_risks_csv(const RiskRecords& records, const Taxonomy& t, const Contract& c) {
    std::vector<InstanceBlock<ActionTable>> blocks;
    for (const auto& r : records) blocks.push_back({r.id, r.value.table()});
    return write_node_table(blocks, t, action_columns("r", c));
}

/// Binary label columns: `instance_id,node,y` for truth, `instance_id,node,m1..mE` for experts.
inline std::vector<std::string> expert_columns(int experts) {
    std::vector<std::string> cols;
    for (int e = 1; e <= experts; ++e) cols.push_back("m" + std::to_string(e));
    return cols;
}

using LabelRecords = std::vector<InstanceBlock<std::vector<LabelVector>>>;

/// One LabelVector per column per instance; entries must be 0 or 1.
inline LabelRecords parse_labels_csv(std::string_view text, const Taxonomy& t, const std::vector<std::string>& columns) {
    LabelRecords out;
    for (auto& b : parse_node_table(text, t, columns)) {
        std::vector<LabelVector> cols(columns.size(), LabelVector(t.size(), 0));
        for (NodeId v = 0; v < t.size(); ++v)
            for (std::size_t j = 0; j < columns.size(); ++j) {
                const double x = b.value.at(v, j);
                if (x != 0.0 && x != 1.0)
                    throw Error(ErrorCode::ParseError, "instance '" + b.id + "' node '" + t.name(v) + "': label must be 0 or 1");
                cols[j][v] = x == 1.0 ? 1 : 0;
            }
        out.push_back({b.id, std::move(cols)});
    }
    return out;
}

inline std::string write_labels_csv(const LabelRecords& records, const Taxonomy& t, const std::vector<std::string>& columns) {
    std::string out = "instance_id,node";
    for (const auto& c : columns) out += "," + c;
    out += "\n";
    for (const auto& r : records)
        for (NodeId v = 0; v < t.size(); ++v) {
            out += r.id + "," + t.name(v);
            for (const auto& col : r.value) out += col[v] ? ",1" : ",0";
            out += "\n";
        }
    return out;
}

// ----------------------------------------------------------------- reports

/// Edge table `instance_id,parent,child,class`, a blank line, then a summary
/// table `view,class,count` over both the edge and neighbourhood views.
inline std::string write_audit(const std::vector<std::pair<std::string, AuditReport>>& reports, const Taxonomy& t) {
    std::string out = "instance_id,parent,child,class\n";
    std::array<std::size_t, kDefectClassCount> edge{}, neigh{};
    std::size_t escapes = 0;
    for (const auto& [id, r] : reports) {
        for (const auto& e : r.edges) {
            out += id + "," + t.name(e.parent) + "," + t.name(e.child) + "," + std::string(to_string(e.cls)) + "\n";
            if (e.handoff_escape) ++escapes;
        }
        for (std::size_t k = 0; k < kDefectClassCount; ++k) {
            edge[k] += r.edge_counts[k];
            neigh[k] += r.neighbourhood_counts[k];
        }
    }
    out += "\nview,class,count\n";
    for (std::size_t k = 0; k < kDefectClassCount; ++k)
        out += "edge," + std::string(to_string(static_cast<DefectClass>(k))) + "," + std::to_string(edge[k]) + "\n";
    for (std::size_t k = 0; k < kDefectClassCount; ++k)
        out += "neighbourhood," + std::string(to_string(static_cast<DefectClass>(k))) + "," + std::to_string(neigh[k]) + "\n";
    out += "edge,handoff_escape," + std::to_string(escapes) + "\n";
    return out;
}

/// Sweep export, columns `kind,threshold,budget_fraction,metric,value`:
///   point   one row per (threshold, curve), thresholds ascending, curves in fixed order
///   auc     one row per curve, threshold and budget_fraction empty
///   closure activation_rate, mean_added, max_added, realised_raw_ratio
///   meta    f1_empty_convention (0), total_decisions, extended_semantics
inline std::string write_sweep(const SweepResult& r) {
    std::string out = "kind,threshold,budget_fraction,metric,value\n";
    for (const auto& p : r.points)
        for (Curve c : kAllCurves)
            out += "point," + std::to_string(p.threshold) + "," + format_double(p.budget_fraction) + "," +
                   std::string(to_string(c)) + "," + format_double(p.value(c)) + "\n";
    for (Curve c : kAllCurves) out += "auc,,," + std::string(to_string(c)) + "," + format_double(r.auc(c)) + "\n";
    out += "closure,,,activation_rate," + format_double(r.closure.activation_rate) + "\n";
    out += "closure,,,mean_added," + format_double(r.closure.mean_added) + "\n";
    out += "closure,,,max_added," + std::to_string(r.closure.max_added) + "\n";
    out += "closure,,,realised_raw_ratio," + format_double(r.closure.realised_raw_ratio) + "\n";
    out += "meta,,,f1_empty_convention,0\n";
    out += "meta,,,total_decisions," + std::to_string(r.total_decisions) + "\n";
    out += "meta,,,extended_semantics," + std::string(r.extended_semantics ? "1" : "0") + "\n";
    return out;
}

}  // namespace cohdefer::io
