#include "dhk/inference.hpp"

#include <algorithm>
#include <sstream>

#include "json.hpp"

namespace dhk {

PathPrediction infer_path(const LabelTree& tree, const ScoreVector& scores) {
    if (scores.size() != static_cast<std::size_t>(tree.node_count()) - 1)
        fail(Errc::length_mismatch, "score vector has " + std::to_string(scores.size()) + " entries, tree needs " +
                                        std::to_string(tree.node_count() - 1));
    PathPrediction best;
    bool first = true;
    for (NodeId leaf : tree.leaves()) {
        double total = 0.0;
        for (NodeId u : tree.ancestors(leaf)) total += score_of(scores, u);
        if (first || total > best.path_score) {
            first = false;
            best.leaf = leaf;
            best.path_score = total;
        }
    }
    for (NodeId u = best.leaf;; u = tree.parent(u)) {
        best.path.push_back(u);
        if (u == tree.root()) break;
    }
    std::reverse(best.path.begin(), best.path.end());
    best.path_length = static_cast<int>(best.path.size()) - 1;
    return best;
}

MetricsReport compute_metrics(const std::vector<NodeId>& predicted, const std::vector<NodeId>& truth,
                              const LabelTree& tree) {
    if (predicted.size() != truth.size())
        fail(Errc::length_mismatch, "prediction/truth lengths differ: " + std::to_string(predicted.size()) +
                                        " vs " + std::to_string(truth.size()));
    const int classes = tree.leaf_count();
    MetricsReport m;
    m.confusion.assign(classes, std::vector<long long>(classes, 0));
    long long correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const int t = tree.leaf_ordinal(truth[i]);
        const int p = tree.leaf_ordinal(predicted[i]);
        ++m.confusion[t][p];
        if (t == p) ++correct;
    }
    const auto total = static_cast<long long>(truth.size());
    m.accuracy = total > 0 ? static_cast<double>(correct) / total : 0.0;

    m.per_class_accuracy.assign(classes, 0.0);
    double psum = 0.0, rsum = 0.0, fsum = 0.0;
    for (int c = 0; c < classes; ++c) {
        long long tp = m.confusion[c][c], row = 0, col = 0;
        for (int k = 0; k < classes; ++k) {
            row += m.confusion[c][k];
            col += m.confusion[k][c];
        }
        const double prec = col > 0 ? static_cast<double>(tp) / col : 0.0;
        const double rec = row > 0 ? static_cast<double>(tp) / row : 0.0;
        const double f1 = (prec + rec) > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
        m.per_class_accuracy[c] = rec;
        psum += prec;
        rsum += rec;
        fsum += f1;
    }
    if (classes > 0) {
        m.precision = psum / classes;
        m.recall = rsum / classes;
        m.f1 = fsum / classes;
    }
    return m;
}

std::string metrics_text(const MetricsReport& m, const LabelTree& tree) {
    std::ostringstream out;
    out.precision(17);
    out << "accuracy: " << m.accuracy << "\n";
    out << "precision: " << m.precision << "\n";
    out << "recall: " << m.recall << "\n";
    out << "f1: " << m.f1 << "\n";
    const auto& leaves = tree.leaves();
    for (std::size_t c = 0; c < leaves.size(); ++c)
        out << "per_class_accuracy[" << tree.name(leaves[c]) << "]: " << m.per_class_accuracy[c] << "\n";
    return out.str();
}

std::string metrics_json(const MetricsReport& m, const LabelTree& tree) {
    nlohmann::json j;
    j["accuracy"] = m.accuracy;
    j["precision"] = m.precision;
    j["recall"] = m.recall;
    j["f1"] = m.f1;
    std::vector<std::string> names;
    for (NodeId leaf : tree.leaves()) names.push_back(tree.name(leaf));
    j["classes"] = names;
    j["per_class_accuracy"] = m.per_class_accuracy;
    j["confusion"] = m.confusion;
    return j.dump(2) + "\n";
}

}  // namespace dhk
