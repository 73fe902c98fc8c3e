#include "dhk/hierarchy.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace dhk {

LabelTree LabelTree::from_edges(const std::vector<std::pair<std::string, std::string>>& edges) {
    if (edges.empty()) fail(Errc::empty_tree, "edge list is empty");

    // Adjacency by name, children kept lexicographically sorted.
    std::map<std::string, std::set<std::string>> kids;
    std::map<std::string, std::string> parent_of;
    for (const auto& [parent, child] : edges) {
        if (parent == child) fail(Errc::cycle, "self edge on '" + parent + "'");
        auto [it, inserted] = parent_of.emplace(child, parent);
        if (!inserted) fail(Errc::duplicate_child, "node '" + child + "' has more than one incoming edge");
        kids[parent].insert(child);
        kids[child];  // make sure leaves appear as keys too
    }

    // The root is the unique name that never appears as a child.
    std::vector<std::string> roots;
    for (const auto& [name, _] : kids)
        if (!parent_of.count(name)) roots.push_back(name);
    if (roots.size() > 1) {
        std::string msg = "multiple roots:";
        for (const auto& r : roots) msg += " '" + r + "'";
        fail(Errc::multiple_roots, msg);
    }
    if (roots.empty()) fail(Errc::cycle, "no root: every node has a parent (edge cycle)");

    // Canonical BFS indexing from the root.
    LabelTree tree;
    std::map<std::string, NodeId> id;
    std::vector<std::string> queue = {roots[0]};
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const std::string& name = queue[head];
        id[name] = static_cast<NodeId>(head);
        tree.names_.push_back(name);
        for (const auto& child : kids[name]) queue.push_back(child);
    }
    if (queue.size() != kids.size())
        fail(Errc::cycle, "unreachable nodes (cycle in a disconnected component)");

    const int n = static_cast<int>(queue.size());
    tree.parent_.assign(n, 0);
    tree.children_.assign(n, {});
    tree.depth_.assign(n, 0);
    for (NodeId v = 1; v < n; ++v) {
        NodeId p = id[parent_of[tree.names_[v]]];
        tree.parent_[v] = p;
        tree.children_[p].push_back(v);
    }
    // BFS order guarantees parents precede children.
    for (NodeId v = 1; v < n; ++v) {
        tree.depth_[v] = tree.depth_[tree.parent_[v]] + 1;
        tree.height_ = std::max(tree.height_, tree.depth_[v]);
    }
    for (NodeId v = 0; v < n; ++v)
        if (tree.children_[v].empty()) tree.leaves_.push_back(v);
    return tree;
}

LabelTree LabelTree::from_text(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> edges;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0 || tab + 1 == line.size())
            fail(Errc::config_parse,
                 "tree line " + std::to_string(lineno) + ": expected 'parent<TAB>child', got '" + line + "'");
        edges.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    return from_edges(edges);
}

LabelTree LabelTree::from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io_error, "cannot open tree file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_text(buf.str());
}

std::string LabelTree::to_edge_list() const {
    std::string out;
    for (NodeId v = 0; v < node_count(); ++v)
        for (NodeId c : children_[v]) out += names_[v] + "\t" + names_[c] + "\n";
    return out;
}

NodeId LabelTree::id_of(const std::string& name) const {
    for (NodeId v = 0; v < node_count(); ++v)
        if (names_[v] == name) return v;
    fail(Errc::invalid_node, "unknown node name: '" + name + "'");
}

bool LabelTree::has_name(const std::string& name) const {
    return std::find(names_.begin(), names_.end(), name) != names_.end();
}

int LabelTree::leaf_ordinal(NodeId leaf) const {
    check_node(leaf);
    auto it = std::lower_bound(leaves_.begin(), leaves_.end(), leaf);
    if (it == leaves_.end() || *it != leaf)
        fail(Errc::not_a_leaf, "node '" + names_[leaf] + "' is not a leaf");
    return static_cast<int>(it - leaves_.begin());
}

std::vector<NodeId> LabelTree::ancestors(NodeId v) const {
    check_node(v);
    std::vector<NodeId> chain;
    for (NodeId u = v; u != 0; u = parent_[u]) chain.push_back(u);
    std::reverse(chain.begin(), chain.end());  // BFS indices ascend toward leaves
    return chain;
}

std::vector<NodeId> LabelTree::descendants(NodeId v) const {
    check_node(v);
    std::vector<NodeId> sub = {v};
    for (std::size_t head = 0; head < sub.size(); ++head)
        for (NodeId c : children_[sub[head]]) sub.push_back(c);
    std::sort(sub.begin(), sub.end());
    return sub;
}

NodeId LabelTree::lca(NodeId u, NodeId v) const {
    check_node(u);
    check_node(v);
    while (u != v) {
        if (depth_[u] >= depth_[v]) u = parent_[u];
        else v = parent_[v];
    }
    return u;
}

int LabelTree::tree_distance(NodeId u, NodeId v) const {
    NodeId a = lca(u, v);
    return (depth_[u] - depth_[a]) + (depth_[v] - depth_[a]);
}

HierLabel LabelTree::expand_leaf_label(NodeId leaf) const {
    check_node(leaf);
    if (!is_leaf(leaf)) fail(Errc::not_a_leaf, "node '" + names_[leaf] + "' is not a leaf");
    HierLabel bits(node_count(), 0);
    for (NodeId u = leaf; ; u = parent_[u]) {
        bits[u] = 1;
        if (u == 0) break;
    }
    return bits;
}

std::vector<std::vector<NodeId>> LabelTree::enumerate_paths() const {
    std::vector<std::vector<NodeId>> paths;
    paths.reserve(leaves_.size());
    for (NodeId leaf : leaves_) {
        std::vector<NodeId> path;
        for (NodeId u = leaf; ; u = parent_[u]) {
            path.push_back(u);
            if (u == 0) break;
        }
        std::reverse(path.begin(), path.end());
        paths.push_back(std::move(path));
    }
    return paths;
}

NodeId LabelTree::supergroup(NodeId leaf) const {
    check_node(leaf);
    if (!is_leaf(leaf)) fail(Errc::not_a_leaf, "node '" + names_[leaf] + "' is not a leaf");
    return parent_[leaf];
}

std::vector<double> level_weights(const LabelTree& tree, WeightScheme scheme) {
    const int h = tree.height();
    std::vector<double> w(static_cast<std::size_t>(h) + 1, 0.0);
    double total = 0.0;
    for (int i = 1; i <= h; ++i) total += i;
    for (int i = 1; i <= h; ++i) {
        switch (scheme) {
            case WeightScheme::None: w[i] = 1.0; break;
            case WeightScheme::Nhw: w[i] = static_cast<double>(i) / h; break;
            case WeightScheme::Phw: w[i] = static_cast<double>(i) / total; break;
        }
    }
    return w;
}

}  // namespace dhk
