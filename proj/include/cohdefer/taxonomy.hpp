#pragma once
// Tree, forest and small-DAG taxonomies over named label nodes.
//
// Nodes are indexed 0..n-1 in order of first appearance as a child record.
// Children keep source order, and every traversal in the library follows
// that order so decodes are reproducible bit-for-bit.

#include "error.hpp"

#include <cstddef>
#include <cstdint>
#include <deque>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cohdefer {

using NodeId = std::size_t;

/// Binary label per node, 0 or 1.
using LabelVector = std::vector<std::uint8_t>;

inline constexpr std::string_view kSentinel = "ROOT";

enum class TaxonomyKind { Tree, Forest, Dag };

constexpr std::string_view to_string(TaxonomyKind kind) {
    switch (kind) {
        case TaxonomyKind::Tree: return "tree";
        case TaxonomyKind::Forest: return "forest";
        case TaxonomyKind::Dag: return "dag";
    }
    return "?";
}

struct ParentLink {
    std::string child;
    std::string parent;  // kSentinel marks a root
};

class Taxonomy {
public:
    /// Builds and validates a taxonomy from child->parent records. A child
    /// listed under several parents makes the taxonomy a DAG.
    static Taxonomy from_links(std::span<const ParentLink> links) {
        if (links.empty()) throw Error(ErrorCode::EmptyTaxonomy, "no node records");

        Taxonomy t;
        for (const auto& link : links) {
            if (link.child == kSentinel)
                throw Error(ErrorCode::ReservedName, "'" + std::string(kSentinel) + "' cannot be a node");
            if (link.child.empty() || link.parent.empty())
                throw Error(ErrorCode::ParseError, "empty node name");
            if (!t.index_.contains(link.child)) {
                t.index_.emplace(link.child, t.names_.size());
                t.names_.push_back(link.child);
            }
        }
        const std::size_t n = t.names_.size();
        t.parents_.assign(n, {});
        t.children_.assign(n, {});
        std::vector<std::uint8_t> declared_root(n, 0);

        for (const auto& link : links) {
            const NodeId c = t.index_.at(link.child);
            if (link.parent == kSentinel) {
                if (declared_root[c] || !t.parents_[c].empty())
                    throw Error(ErrorCode::DuplicateNode, "node '" + link.child + "' declared twice");
                declared_root[c] = 1;
                continue;
            }
            auto it = t.index_.find(link.parent);
            if (it == t.index_.end())
                throw Error(ErrorCode::UnknownParent,
                            "parent '" + link.parent + "' of '" + link.child + "' is never defined");
            const NodeId p = it->second;
            if (declared_root[c])
                throw Error(ErrorCode::DuplicateNode, "node '" + link.child + "' declared twice");
            for (NodeId existing : t.parents_[c])
                if (existing == p)
                    throw Error(ErrorCode::DuplicateNode,
                                "edge '" + link.parent + "' -> '" + link.child + "' listed twice");
            t.parents_[c].push_back(p);
            t.children_[p].push_back(c);
        }

        bool multi_parent = false;
        for (NodeId v = 0; v < n; ++v) {
            if (t.parents_[v].empty()) t.roots_.push_back(v);
            if (t.parents_[v].size() > 1) multi_parent = true;
        }
        for (NodeId p = 0; p < n; ++p)
            for (NodeId c : t.children_[p]) t.edges_.emplace_back(p, c);

        // Kahn's algorithm, seeded with roots in node order.
        std::vector<std::size_t> pending(n);
        for (NodeId v = 0; v < n; ++v) pending[v] = t.parents_[v].size();
        std::deque<NodeId> queue(t.roots_.begin(), t.roots_.end());
        while (!queue.empty()) {
            NodeId v = queue.front();
            queue.pop_front();
            t.topo_.push_back(v);
            for (NodeId c : t.children_[v])
                if (--pending[c] == 0) queue.push_back(c);
        }
        if (t.topo_.size() != n) throw Error(ErrorCode::CycleDetected, "taxonomy contains a cycle");

        if (multi_parent)
            t.kind_ = TaxonomyKind::Dag;
        else
            t.kind_ = t.roots_.size() == 1 ? TaxonomyKind::Tree : TaxonomyKind::Forest;
        return t;
    }

    std::size_t size() const noexcept { return names_.size(); }
    TaxonomyKind kind() const noexcept { return kind_; }
    bool is_dag() const noexcept { return kind_ == TaxonomyKind::Dag; }

    const std::string& name(NodeId v) const { return names_.at(v); }
    std::span<const std::string> names() const noexcept { return names_; }

    NodeId index_of(std::string_view name) const {
        auto it = index_.find(std::string(name));
        if (it == index_.end()) throw Error(ErrorCode::UnknownNode, "unknown node '" + std::string(name) + "'");
        return it->second;
    }
    bool contains(std::string_view name) const { return index_.contains(std::string(name)); }

    /// Single parent of a tree/forest node; nullopt for roots.
    std::optional<NodeId> parent(NodeId v) const {
        const auto& ps = parents_.at(v);
        if (ps.empty()) return std::nullopt;
        return ps.front();
    }
    std::span<const NodeId> parents(NodeId v) const { return parents_.at(v); }
    std::span<const NodeId> children(NodeId v) const { return children_.at(v); }
    std::span<const NodeId> roots() const noexcept { return roots_; }
    std::span<const NodeId> topo_order() const noexcept { return topo_; }
    /// (parent, child) pairs, grouped by parent in node order.
    std::span<const std::pair<NodeId, NodeId>> edges() const noexcept { return edges_; }

    bool is_root(NodeId v) const { return parents_.at(v).empty(); }
    bool is_leaf(NodeId v) const { return children_.at(v).empty(); }

    void require_tree(std::string_view what) const {
        if (is_dag())
            throw Error(ErrorCode::DagUnsupported, std::string(what) + " requires a tree or forest taxonomy");
    }

private:
    Taxonomy() = default;

    std::vector<std::string> names_;
    std::unordered_map<std::string, NodeId> index_;
    std::vector<std::vector<NodeId>> parents_;
    std::vector<std::vector<NodeId>> children_;
    std::vector<NodeId> roots_;
    std::vector<NodeId> topo_;
    std::vector<std::pair<NodeId, NodeId>> edges_;
    TaxonomyKind kind_ = TaxonomyKind::Tree;
};

inline Taxonomy parse_taxonomy(std::span<const ParentLink> links) { return Taxonomy::from_links(links); }

inline Taxonomy parse_taxonomy(std::initializer_list<ParentLink> links) {
    return Taxonomy::from_links(std::span<const ParentLink>(links.begin(), links.size()));
}

inline void require_label_vector(const Taxonomy& t, const LabelVector& y) {
    if (y.size() != t.size())
        throw Error(ErrorCode::ShapeMismatch,
                    "label vector has " + std::to_string(y.size()) + " entries, taxonomy has " +
                        std::to_string(t.size()) + " nodes");
}

inline bool is_upward_closed(const Taxonomy& t, const LabelVector& y) {
    require_label_vector(t, y);
    for (auto [p, c] : t.edges())
        if (y[c] && !y[p]) return false;
    return true;
}

/// Smallest upward-closed vector that dominates y.
inline LabelVector upward_close(const Taxonomy& t, const LabelVector& y) {
    require_label_vector(t, y);
    LabelVector out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] ? 1 : 0;
    auto order = t.topo_order();
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if (out[*it])
            for (NodeId p : t.parents(*it)) out[p] = 1;
    return out;
}

/// Strict descendants of v, in breadth-first order.
inline std::vector<NodeId> descendants(const Taxonomy& t, NodeId v) {
    if (v >= t.size()) throw Error(ErrorCode::UnknownNode, "node index " + std::to_string(v) + " out of range");
    std::vector<NodeId> out;
    std::vector<std::uint8_t> seen(t.size(), 0);
    std::deque<NodeId> queue(t.children(v).begin(), t.children(v).end());
    while (!queue.empty()) {
        NodeId u = queue.front();
        queue.pop_front();
        if (seen[u]) continue;
        seen[u] = 1;
        out.push_back(u);
        for (NodeId c : t.children(u)) queue.push_back(c);
    }
    return out;
}

inline std::vector<NodeId> descendants(const Taxonomy& t, std::string_view name) {
    return descendants(t, t.index_of(name));
}

}  // namespace cohdefer
