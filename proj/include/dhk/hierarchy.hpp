#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dhk/error.hpp"

namespace dhk {

// Dense node index. The root is always 0; indices follow canonical order
// (breadth-first, siblings sorted lexicographically by name).
using NodeId = int;

// Multi-hot label over all nodes. The root bit is always set and is excluded
// from every loss sum; the true bits form exactly one root-to-leaf path.
using HierLabel = std::vector<std::uint8_t>;

enum class WeightScheme { None, Nhw, Phw };

// Immutable rooted class tree. All queries are pure and safe to call from
// any number of concurrent readers.
class LabelTree {
public:
    static LabelTree from_edges(const std::vector<std::pair<std::string, std::string>>& edges);

    // Parses the edge-list format: one `parent<TAB>child` per line, '#' comments.
    static LabelTree from_text(const std::string& text);
    static LabelTree from_file(const std::string& path);

    // Canonical edge list (BFS order). Parsing the dump and dumping again is
    // byte-identical.
    std::string to_edge_list() const;

    int node_count() const { return static_cast<int>(names_.size()); }
    int height() const { return height_; }
    NodeId root() const { return 0; }

    const std::string& name(NodeId v) const { check_node(v); return names_[v]; }
    NodeId id_of(const std::string& name) const;
    bool has_name(const std::string& name) const;

    NodeId parent(NodeId v) const { check_node(v); return parent_[v]; }
    const std::vector<NodeId>& children(NodeId v) const { check_node(v); return children_[v]; }
    int depth(NodeId v) const { check_node(v); return depth_[v]; }
    bool is_leaf(NodeId v) const { check_node(v); return children_[v].empty(); }

    // Leaves in canonical index order.
    const std::vector<NodeId>& leaves() const { return leaves_; }
    int leaf_count() const { return static_cast<int>(leaves_.size()); }
    // Position of `leaf` within leaves(); throws not_a_leaf otherwise.
    int leaf_ordinal(NodeId leaf) const;

    // Ancestor chain of v including v itself, excluding the root (the root is
    // an always-positive constant). ancestors(root) is empty. Ascending order.
    std::vector<NodeId> ancestors(NodeId v) const;

    // Subtree of v including v itself. Ascending order.
    std::vector<NodeId> descendants(NodeId v) const;

    NodeId lca(NodeId u, NodeId v) const;

    // Hop count between u and v in the undirected tree:
    // (depth(u) - depth(lca)) + (depth(v) - depth(lca)).
    int tree_distance(NodeId u, NodeId v) const;

    // Multi-hot label whose true bits are exactly the leaf's ancestor chain
    // plus the root.
    HierLabel expand_leaf_label(NodeId leaf) const;

    // One root-to-leaf path per leaf, in canonical leaf order.
    std::vector<std::vector<NodeId>> enumerate_paths() const;

    // Parent of a leaf: the supergroup used for triplet sampling.
    NodeId supergroup(NodeId leaf) const;

private:
    LabelTree() = default;
    void check_node(NodeId v) const {
        if (v < 0 || v >= node_count()) fail(Errc::invalid_node, "node id out of range: " + std::to_string(v));
    }

    std::vector<std::string> names_;
    std::vector<NodeId> parent_;                 // parent_[0] == 0
    std::vector<std::vector<NodeId>> children_;  // canonical order
    std::vector<int> depth_;
    std::vector<NodeId> leaves_;
    int height_ = 0;
};

// Per-level loss weights indexed by depth 1..H (index 0 is unused and zero).
//   Nhw:  w(i) = i / H
//   Phw:  w(i) = i / (1 + 2 + ... + H)       (sums to 1 over levels)
//   None: w(i) = 1
std::vector<double> level_weights(const LabelTree& tree, WeightScheme scheme);

}  // namespace dhk
