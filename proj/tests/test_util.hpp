#pragma once

// Shared helpers for the test suites: seeded random trees and independent
// brute-force oracles kept deliberately separate from the library code paths
// they check.

#include <algorithm>
#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "dhk/hierarchy.hpp"
#include "dhk/rng.hpp"

namespace dhk::testutil {

// Random tree with 2..max_nodes nodes and height <= max_height (height >= 1).
inline LabelTree random_tree(std::mt19937_64& rng, int max_nodes, int max_height) {
    const int n = 2 + static_cast<int>(bounded(rng, static_cast<std::uint64_t>(max_nodes - 1)));
    std::vector<int> depth = {0};
    std::vector<std::pair<std::string, std::string>> edges;
    for (int i = 1; i < n; ++i) {
        int parent;
        do {
            parent = static_cast<int>(bounded(rng, static_cast<std::uint64_t>(i)));
        } while (depth[static_cast<std::size_t>(parent)] >= max_height);
        depth.push_back(depth[static_cast<std::size_t>(parent)] + 1);
        edges.emplace_back("n" + std::to_string(parent), "n" + std::to_string(i));
    }
    return LabelTree::from_edges(edges);
}

// Hop count between u and v by breadth-first search over the undirected tree.
inline int bfs_distance(const LabelTree& tree, NodeId u, NodeId v) {
    const int n = tree.node_count();
    std::vector<int> dist(static_cast<std::size_t>(n), -1);
    std::deque<NodeId> queue = {u};
    dist[static_cast<std::size_t>(u)] = 0;
    while (!queue.empty()) {
        const NodeId x = queue.front();
        queue.pop_front();
        std::vector<NodeId> next = tree.children(x);
        if (x != tree.root()) next.push_back(tree.parent(x));
        for (NodeId y : next) {
            if (dist[static_cast<std::size_t>(y)] < 0) {
                dist[static_cast<std::size_t>(y)] = dist[static_cast<std::size_t>(x)] + 1;
                queue.push_back(y);
            }
        }
    }
    return dist[static_cast<std::size_t>(v)];
}

// Deepest node present in both root-inclusive ancestor chains.
inline NodeId ancestor_intersection_lca(const LabelTree& tree, NodeId u, NodeId v) {
    std::vector<NodeId> au, av;
    for (NodeId x = u;; x = tree.parent(x)) {
        au.push_back(x);
        if (x == tree.root()) break;
    }
    for (NodeId x = v;; x = tree.parent(x)) {
        av.push_back(x);
        if (x == tree.root()) break;
    }
    NodeId best = tree.root();
    for (NodeId a : au)
        for (NodeId b : av)
            if (a == b && tree.depth(a) > tree.depth(best)) best = a;
    return best;
}

inline LabelTree cavitation_tree() {
    return LabelTree::from_edges({{"root", "cavitation"},
                                  {"root", "non-cavitation"},
                                  {"cavitation", "incipient"},
                                  {"cavitation", "constant"},
                                  {"cavitation", "choked flow"},
                                  {"non-cavitation", "turbulent"},
                                  {"non-cavitation", "no flow"}});
}

// root -> {A, B}, A -> {A1, A2}, B -> {B1, B2}
inline LabelTree balanced4_tree() {
    return LabelTree::from_edges(
        {{"root", "A"}, {"root", "B"}, {"A", "A1"}, {"A", "A2"}, {"B", "B1"}, {"B", "B2"}});
}

}  // namespace dhk::testutil
