#pragma once

#include <vector>

#include "dhk/hierarchy.hpp"

namespace dhk {

// Per-node probabilities for every non-root node; entry k belongs to node k+1.
using ScoreVector = std::vector<double>;

inline double score_of(const ScoreVector& s, NodeId v) { return s[static_cast<std::size_t>(v) - 1]; }

// Probabilities are clamped into [kProbClamp, 1 - kProbClamp] before any log
// so gradients stay bounded.
constexpr double kProbClamp = 1e-7;

// Aggregation used for the ancestor-min / descendant-max inside the tree
// losses. Hard routes the whole subgradient to the first extremal node in
// canonical order; Smooth uses the log-sum-exp approximation
//   min(x) ~ -(1/beta) ln sum exp(-beta x_i),  max(x) ~ (1/beta) ln sum exp(beta x_i)
// whose gradients are softmax weights.
struct AggMode {
    static AggMode hard() { return {false, 0.0}; }
    static AggMode smooth(double beta);
    bool is_smooth = false;
    double beta = 0.0;
};

struct LossResult {
    double value = 0.0;
    std::vector<double> grad_scores;  // d value / d s_v  (non-root indexing)
    std::vector<double> grad_logits;  // d value / d z_v  via s = sigmoid(z)
};

// Smooth min/max with max-shift for overflow safety. smooth_min(x) lies in
// [min(x) - ln(n)/beta, min(x)]; a single value is returned exactly.
double smooth_min(const std::vector<double>& values, double beta);
double smooth_max(const std::vector<double>& values, double beta);

// Softmax weights d smooth_min / d x_i resp. d smooth_max / d x_i.
std::vector<double> smooth_min_weights(const std::vector<double>& values, double beta);
std::vector<double> smooth_max_weights(const std::vector<double>& values, double beta);

// Plain multi-label binary cross-entropy over all non-root nodes.
LossResult bce_loss(const ScoreVector& scores, const HierLabel& label);

// Hierarchy-consistent score update: positives take the minimum over their
// ancestor chain, negatives the maximum over their subtree.
ScoreVector constrained_scores(const LabelTree& tree, const ScoreVector& scores, const HierLabel& label);

// BCE with hierarchy-constrained scores, each node's term scaled by its
// level weight.
LossResult ht_loss(const LabelTree& tree, const ScoreVector& scores, const HierLabel& label,
                   WeightScheme scheme, AggMode mode = AggMode::hard());

// ht_loss with a focal modulating factor: positive terms scaled by
// (1 - min)^gamma, negative terms by (max)^gamma. gamma in [0, 5];
// gamma = 0 reduces to ht_loss.
LossResult fht_loss(const LabelTree& tree, const ScoreVector& scores, const HierLabel& label,
                    double gamma, WeightScheme scheme, AggMode mode = AggMode::hard());

}  // namespace dhk
