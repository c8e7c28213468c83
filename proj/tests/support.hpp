#pragma once

#include <cohdefer/cohdefer.hpp>
#include <cohdefer/oracle.hpp>

#include <functional>
#include <string>
#include <vector>

namespace cohdefer::test {

inline const std::string kRoot(kSentinel);

inline Taxonomy chain(std::size_t n) {
    std::vector<ParentLink> links;
    for (std::size_t i = 0; i < n; ++i) links.push_back({"v" + std::to_string(i), i == 0 ? kRoot : "v" + std::to_string(i - 1)});
    return Taxonomy::from_links(links);
}

inline Taxonomy pair_tree() { return parse_taxonomy({{"p", kRoot}, {"c", "p"}}); }

inline Taxonomy lung_subtree() {
    return parse_taxonomy({{"LungOpacity", kRoot}, {"Edema", "LungOpacity"}, {"Infiltration", "LungOpacity"}, {"Consolidation", "LungOpacity"}});
}

/// Tree from a parent array, parent[i] < i for i >= 1, parent[0] ignored.
inline Taxonomy from_parents(const std::vector<std::size_t>& parent) {
    std::vector<ParentLink> links;
    for (std::size_t i = 0; i < parent.size(); ++i)
        links.push_back({"n" + std::to_string(i), i == 0 ? kRoot : "n" + std::to_string(parent[i])});
    return Taxonomy::from_links(links);
}

/// Every labelled rooted tree on n nodes with parents earlier in node order.
inline void for_each_tree(std::size_t n, const std::function<void(const Taxonomy&)>& f) {
    std::vector<std::size_t> parent(n, 0);
    std::function<void(std::size_t)> rec = [&](std::size_t i) {
        if (i == n) {
            f(from_parents(parent));
            return;
        }
        for (std::size_t p = 0; p < i; ++p) {
            parent[i] = p;
            rec(i + 1);
        }
    };
    rec(1);
}

inline ActionVector acts(std::initializer_list<int> xs) {
    ActionVector a;
    for (int x : xs) a.push_back(Action::from_index(static_cast<std::size_t>(x)));
    return a;
}

inline constexpr int D = 2;  // single-expert deferral index

inline PrimitiveTable prims(std::size_t rows, std::size_t arity, std::vector<double> data) {
    return PrimitiveTable(ActionTable(rows, arity, std::move(data)));
}

/// Random tree with 2..max_nodes nodes, in node-index parents-first order.
inline Taxonomy random_small_tree(Rng& rng, std::size_t min_nodes, std::size_t max_nodes) {
    std::uniform_int_distribution<std::size_t> size(min_nodes, max_nodes);
    return random_tree(size(rng), 0, rng());
}

}  // namespace cohdefer::test
