#pragma once

#include <cstdint>
#include <vector>

#include "dhk/hierarchy.hpp"

namespace dhk {

enum class DistanceMeasure { Cosine, Euclidean };

// Anchor/positive share a supergroup, anchor/negative do not, and the
// positive sits strictly closer in tree distance than the negative.
struct Triplet {
    int anchor_idx = -1;
    int pos_idx = -1;
    int neg_idx = -1;
    NodeId anchor_leaf = -1;
    NodeId pos_leaf = -1;
    NodeId neg_leaf = -1;
    double margin = 0.0;
};

struct DynamicMargin {
    double m = 0.0;        // m_eps + 0.5 * m_sigma
    double m_sigma = 0.0;  // (psi(anchor, neg) - psi(anchor, pos)) / (2H), in (0, 1]
};

// Tree-distance margin for one leaf triplet. Throws invalid_triplet when the
// group constraints or the distance ordering are violated.
DynamicMargin dynamic_margin(const LabelTree& tree, NodeId anchor, NodeId pos, NodeId neg, double m_eps);

// For every batch element usable as an anchor, draws one positive from the
// same supergroup (different sample index; the same leaf is allowed) and one
// negative from a different supergroup, both uniformly from the batch.
// Anchors lacking a valid mate are skipped. Deterministic per seed.
std::vector<Triplet> mine_triplets(const std::vector<NodeId>& batch_leaves, const LabelTree& tree,
                                   std::uint64_t seed, double m_eps);

// Cosine: 1 - a.b / (|a||b|), in [0,2].  Euclidean: |a - b|.
double pair_distance(const std::vector<double>& a, const std::vector<double>& b, DistanceMeasure measure);

struct GttResult {
    double value = 0.0;
    std::vector<std::vector<double>> grad_embeddings;  // same shape as the input embeddings
    int active = 0;                                    // hinge terms with positive slack
};

// Mean hinge loss over the mined triplets. Inactive triplets contribute
// neither value nor gradient; an empty triplet list yields zero.
GttResult gtt_loss(const std::vector<std::vector<double>>& embeddings, const std::vector<Triplet>& triplets,
                   DistanceMeasure measure);

}  // namespace dhk
