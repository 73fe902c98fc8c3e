#include "dhk/grouptriplet.hpp"

#include <algorithm>
#include <cmath>

#include "dhk/rng.hpp"

namespace dhk {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

void check_dims(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        fail(Errc::dimension_mismatch, "embedding dimensions differ: " + std::to_string(a.size()) + " vs " +
                                           std::to_string(b.size()));
}

// d(a,b) = 1 - cos(a,b); writes gradients w.r.t. the raw (unnormalized)
// vectors, i.e. the L2 normalization is part of the chain rule.
double cosine_distance_grad(const std::vector<double>& a, const std::vector<double>& b,
                            std::vector<double>* ga, std::vector<double>* gb, double sign) {
    const double na = norm(a), nb = norm(b);
    if (na == 0.0 || nb == 0.0) fail(Errc::zero_vector, "cosine distance of a zero vector");
    // rounding can push |cos| past 1 for near-parallel vectors
    const double c = std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
    if (ga) {
        for (std::size_t k = 0; k < a.size(); ++k) {
            (*ga)[k] += sign * (-(b[k] / (na * nb) - c * a[k] / (na * na)));
            (*gb)[k] += sign * (-(a[k] / (na * nb) - c * b[k] / (nb * nb)));
        }
    }
    return 1.0 - c;
}

double euclidean_distance_grad(const std::vector<double>& a, const std::vector<double>& b,
                               std::vector<double>* ga, std::vector<double>* gb, double sign) {
    double sq = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        sq += d * d;
    }
    const double dist = std::sqrt(sq);
    if (ga && dist > 0.0) {
        for (std::size_t k = 0; k < a.size(); ++k) {
            const double g = (a[k] - b[k]) / dist;
            (*ga)[k] += sign * g;
            (*gb)[k] -= sign * g;
        }
    }
    return dist;
}

double distance_grad(const std::vector<double>& a, const std::vector<double>& b, DistanceMeasure measure,
                     std::vector<double>* ga, std::vector<double>* gb, double sign) {
    check_dims(a, b);
    return measure == DistanceMeasure::Cosine ? cosine_distance_grad(a, b, ga, gb, sign)
                                              : euclidean_distance_grad(a, b, ga, gb, sign);
}

}  // namespace

DynamicMargin dynamic_margin(const LabelTree& tree, NodeId anchor, NodeId pos, NodeId neg, double m_eps) {
    for (NodeId v : {anchor, pos, neg})
        if (!tree.is_leaf(v))
            fail(Errc::invalid_triplet, "triplet node '" + tree.name(v) + "' is not a leaf");
    if (tree.supergroup(anchor) != tree.supergroup(pos))
        fail(Errc::invalid_triplet, "anchor and positive are in different supergroups");
    if (tree.supergroup(anchor) == tree.supergroup(neg))
        fail(Errc::invalid_triplet, "anchor and negative share a supergroup");
    const int psi_pos = tree.tree_distance(anchor, pos);
    const int psi_neg = tree.tree_distance(anchor, neg);
    if (psi_pos >= psi_neg)
        fail(Errc::invalid_triplet, "positive must be strictly closer than negative in tree distance");
    DynamicMargin dm;
    dm.m_sigma = static_cast<double>(psi_neg - psi_pos) / (2.0 * tree.height());
    dm.m = m_eps + 0.5 * dm.m_sigma;
    return dm;
}

std::vector<Triplet> mine_triplets(const std::vector<NodeId>& batch_leaves, const LabelTree& tree,
                                   std::uint64_t seed, double m_eps) {
    const int n = static_cast<int>(batch_leaves.size());
    std::vector<NodeId> group(batch_leaves.size());
    for (int i = 0; i < n; ++i) group[i] = tree.supergroup(batch_leaves[i]);

    std::mt19937_64 rng(seed);
    std::vector<Triplet> out;
    std::vector<int> positives, negatives;
    for (int a = 0; a < n; ++a) {
        positives.clear();
        negatives.clear();
        for (int j = 0; j < n; ++j) {
            if (j != a && group[j] == group[a]) positives.push_back(j);
            if (group[j] != group[a]) negatives.push_back(j);
        }
        if (positives.empty() || negatives.empty()) continue;
        const int p = positives[bounded(rng, positives.size())];
        const int g = negatives[bounded(rng, negatives.size())];
        Triplet t;
        t.anchor_idx = a;
        t.pos_idx = p;
        t.neg_idx = g;
        t.anchor_leaf = batch_leaves[a];
        t.pos_leaf = batch_leaves[p];
        t.neg_leaf = batch_leaves[g];
        t.margin = dynamic_margin(tree, t.anchor_leaf, t.pos_leaf, t.neg_leaf, m_eps).m;
        out.push_back(t);
    }
    return out;
}

double pair_distance(const std::vector<double>& a, const std::vector<double>& b, DistanceMeasure measure) {
    return distance_grad(a, b, measure, nullptr, nullptr, 1.0);
}

GttResult gtt_loss(const std::vector<std::vector<double>>& embeddings, const std::vector<Triplet>& triplets,
                   DistanceMeasure measure) {
    GttResult r;
    r.grad_embeddings.resize(embeddings.size());
    for (std::size_t i = 0; i < embeddings.size(); ++i)
        r.grad_embeddings[i].assign(embeddings[i].size(), 0.0);
    if (triplets.empty()) return r;

    const int n = static_cast<int>(embeddings.size());
    const double inv_n = 1.0 / static_cast<double>(triplets.size());
    for (const Triplet& t : triplets) {
        if (t.anchor_idx < 0 || t.anchor_idx >= n || t.pos_idx < 0 || t.pos_idx >= n || t.neg_idx < 0 ||
            t.neg_idx >= n)
            fail(Errc::index_out_of_range, "triplet sample index outside the embedding batch");
        const auto& a = embeddings[static_cast<std::size_t>(t.anchor_idx)];
        const auto& p = embeddings[static_cast<std::size_t>(t.pos_idx)];
        const auto& g = embeddings[static_cast<std::size_t>(t.neg_idx)];
        const double slack = pair_distance(a, p, measure) - pair_distance(a, g, measure) + t.margin;
        if (slack <= 0.0) continue;
        r.value += inv_n * slack;
        ++r.active;
        auto& da = r.grad_embeddings[static_cast<std::size_t>(t.anchor_idx)];
        auto& dp = r.grad_embeddings[static_cast<std::size_t>(t.pos_idx)];
        auto& dg = r.grad_embeddings[static_cast<std::size_t>(t.neg_idx)];
        distance_grad(a, p, measure, &da, &dp, inv_n);
        distance_grad(a, g, measure, &da, &dg, -inv_n);
    }
    return r;
}

}  // namespace dhk
