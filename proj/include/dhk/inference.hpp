#pragma once

#include <string>
#include <vector>

#include "dhk/hierarchy.hpp"
#include "dhk/hkloss.hpp"

namespace dhk {

struct PathPrediction {
    std::vector<NodeId> path;  // root first
    NodeId leaf = -1;
    double path_score = 0.0;  // sum of non-root node scores along the path
    int path_length = 0;      // edges; diagnostic for unbalanced trees
};

// Root-to-leaf path maximizing the score sum, by full path enumeration.
// Ties break toward the first leaf in canonical order.
PathPrediction infer_path(const LabelTree& tree, const ScoreVector& scores);

struct MetricsReport {
    double accuracy = 0.0;  // micro
    double precision = 0.0, recall = 0.0, f1 = 0.0;   // macro over leaf classes
    std::vector<double> per_class_accuracy;           // recall per leaf, canonical order
    std::vector<std::vector<long long>> confusion;    // [true leaf ordinal][predicted leaf ordinal]
};

// Leaf-level classification metrics. Per-class precision/recall are zero
// when their denominator is zero; F1 = 2PR/(P+R), zero when P+R = 0.
MetricsReport compute_metrics(const std::vector<NodeId>& predicted, const std::vector<NodeId>& truth,
                              const LabelTree& tree);

// `key: value` per line. Stable ordering, suitable for diffing.
std::string metrics_text(const MetricsReport& m, const LabelTree& tree);

// Machine-readable JSON record including the confusion matrix.
std::string metrics_json(const MetricsReport& m, const LabelTree& tree);

}  // namespace dhk
