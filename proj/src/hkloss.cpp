#include "dhk/hkloss.hpp"

#include <algorithm>
#include <cmath>

namespace dhk {

namespace {

struct Clamped {
    double value;
    bool active;  // derivative passes through only when the clamp is not binding
};

Clamped clamp_prob(double x) {
    if (x < kProbClamp) return {kProbClamp, false};
    if (x > 1.0 - kProbClamp) return {1.0 - kProbClamp, false};
    return {x, true};
}

void check_lengths(const LabelTree& tree, const ScoreVector& scores, const HierLabel& label) {
    const auto n = static_cast<std::size_t>(tree.node_count());
    if (scores.size() != n - 1)
        fail(Errc::length_mismatch, "score vector has " + std::to_string(scores.size()) +
                                        " entries, tree needs " + std::to_string(n - 1));
    if (label.size() != n)
        fail(Errc::length_mismatch, "label has " + std::to_string(label.size()) +
                                        " entries, tree has " + std::to_string(n) + " nodes");
}

void chain_to_logits(const ScoreVector& scores, LossResult& r) {
    r.grad_logits.resize(r.grad_scores.size());
    for (std::size_t k = 0; k < r.grad_scores.size(); ++k) {
        const double s = scores[k];
        r.grad_logits[k] = r.grad_scores[k] * s * (1.0 - s);
    }
}

// Positive node term as a function of the aggregated ancestor score p.
//   plain: -ln p          focal: (1-p)^g * (-ln p)
void positive_term(double p, bool focal, double gamma, double& term, double& dterm) {
    const double neglog = -std::log(p);
    if (!focal || gamma == 0.0) {
        term = neglog;
        dterm = -1.0 / p;
    } else {
        const double mod = std::pow(1.0 - p, gamma);
        term = mod * neglog;
        dterm = -gamma * std::pow(1.0 - p, gamma - 1.0) * neglog - mod / p;
    }
}

// Negative node term as a function of the aggregated descendant score q.
//   plain: -ln(1-q)       focal: q^g * (-ln(1-q))
void negative_term(double q, bool focal, double gamma, double& term, double& dterm) {
    const double neglog = -std::log(1.0 - q);
    if (!focal || gamma == 0.0) {
        term = neglog;
        dterm = 1.0 / (1.0 - q);
    } else {
        const double mod = std::pow(q, gamma);
        term = mod * neglog;
        dterm = gamma * std::pow(q, gamma - 1.0) * neglog + mod / (1.0 - q);
    }
}

LossResult tree_loss(const LabelTree& tree, const ScoreVector& scores, const HierLabel& label,
                     bool focal, double gamma, WeightScheme scheme, AggMode mode) {
    check_lengths(tree, scores, label);
    if (focal && (gamma < 0.0 || gamma > 5.0))
        fail(Errc::gamma_out_of_range, "gamma must lie in [0,5], got " + std::to_string(gamma));
    if (mode.is_smooth && mode.beta <= 0.0)
        fail(Errc::non_positive_beta, "smoothing beta must be positive");

    const std::vector<double> weights = level_weights(tree, scheme);
    const int n = tree.node_count();
    LossResult r;
    r.grad_scores.assign(static_cast<std::size_t>(n) - 1, 0.0);

    std::vector<double> xs;
    for (NodeId v = 1; v < n; ++v) {
        const double w = weights[static_cast<std::size_t>(tree.depth(v))];
        const bool positive = label[static_cast<std::size_t>(v)] != 0;
        const std::vector<NodeId> group = positive ? tree.ancestors(v) : tree.descendants(v);

        xs.clear();
        for (NodeId u : group) xs.push_back(score_of(scores, u));

        double term = 0.0, dterm = 0.0;
        if (!mode.is_smooth) {
            // hard aggregation: whole subgradient to the first extremal node
            std::size_t arg = 0;
            double agg = xs[0];
            for (std::size_t i = 1; i < xs.size(); ++i) {
                if (positive ? (xs[i] < agg) : (xs[i] > agg)) {
                    agg = xs[i];
                    arg = i;
                }
            }
            const Clamped c = clamp_prob(agg);
            if (positive) positive_term(c.value, focal, gamma, term, dterm);
            else negative_term(c.value, focal, gamma, term, dterm);
            r.value += w * term;
            if (c.active) r.grad_scores[static_cast<std::size_t>(group[arg]) - 1] += w * dterm;
        } else {
            const double agg = positive ? smooth_min(xs, mode.beta) : smooth_max(xs, mode.beta);
            const Clamped c = clamp_prob(agg);
            if (positive) positive_term(c.value, focal, gamma, term, dterm);
            else negative_term(c.value, focal, gamma, term, dterm);
            r.value += w * term;
            if (c.active) {
                const std::vector<double> gw =
                    positive ? smooth_min_weights(xs, mode.beta) : smooth_max_weights(xs, mode.beta);
                for (std::size_t i = 0; i < group.size(); ++i)
                    r.grad_scores[static_cast<std::size_t>(group[i]) - 1] += w * dterm * gw[i];
            }
        }
    }
    chain_to_logits(scores, r);
    return r;
}

}  // namespace

AggMode AggMode::smooth(double beta) {
    if (beta <= 0.0) fail(Errc::non_positive_beta, "smoothing beta must be positive");
    return {true, beta};
}

double smooth_min(const std::vector<double>& values, double beta) {
    if (values.empty()) fail(Errc::empty_input, "smooth_min of empty input");
    if (beta <= 0.0) fail(Errc::non_positive_beta, "smoothing beta must be positive");
    const double m = *std::min_element(values.begin(), values.end());
    double sum = 0.0;
    for (double x : values) sum += std::exp(-beta * (x - m));
    return m - std::log(sum) / beta;
}

double smooth_max(const std::vector<double>& values, double beta) {
    if (values.empty()) fail(Errc::empty_input, "smooth_max of empty input");
    if (beta <= 0.0) fail(Errc::non_positive_beta, "smoothing beta must be positive");
    const double m = *std::max_element(values.begin(), values.end());
    double sum = 0.0;
    for (double x : values) sum += std::exp(beta * (x - m));
    return m + std::log(sum) / beta;
}

std::vector<double> smooth_min_weights(const std::vector<double>& values, double beta) {
    if (values.empty()) fail(Errc::empty_input, "smooth_min of empty input");
    if (beta <= 0.0) fail(Errc::non_positive_beta, "smoothing beta must be positive");
    const double m = *std::min_element(values.begin(), values.end());
    std::vector<double> w(values.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        w[i] = std::exp(-beta * (values[i] - m));
        sum += w[i];
    }
    for (double& x : w) x /= sum;
    return w;
}

std::vector<double> smooth_max_weights(const std::vector<double>& values, double beta) {
    if (values.empty()) fail(Errc::empty_input, "smooth_max of empty input");
    if (beta <= 0.0) fail(Errc::non_positive_beta, "smoothing beta must be positive");
    const double m = *std::max_element(values.begin(), values.end());
    std::vector<double> w(values.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        w[i] = std::exp(beta * (values[i] - m));
        sum += w[i];
    }
    for (double& x : w) x /= sum;
    return w;
}

LossResult bce_loss(const ScoreVector& scores, const HierLabel& label) {
    if (label.size() != scores.size() + 1)
        fail(Errc::length_mismatch, "label has " + std::to_string(label.size()) +
                                        " entries, expected " + std::to_string(scores.size() + 1));
    LossResult r;
    r.grad_scores.assign(scores.size(), 0.0);
    for (std::size_t v = 1; v < label.size(); ++v) {
        const Clamped c = clamp_prob(scores[v - 1]);
        if (label[v]) {
            r.value += -std::log(c.value);
            if (c.active) r.grad_scores[v - 1] += -1.0 / c.value;
        } else {
            r.value += -std::log(1.0 - c.value);
            if (c.active) r.grad_scores[v - 1] += 1.0 / (1.0 - c.value);
        }
    }
    chain_to_logits(scores, r);
    return r;
}

ScoreVector constrained_scores(const LabelTree& tree, const ScoreVector& scores, const HierLabel& label) {
    check_lengths(tree, scores, label);
    const int n = tree.node_count();
    ScoreVector out(static_cast<std::size_t>(n) - 1);
    for (NodeId v = 1; v < n; ++v) {
        if (label[static_cast<std::size_t>(v)]) {
            double m = score_of(scores, v);
            for (NodeId u : tree.ancestors(v)) m = std::min(m, score_of(scores, u));
            out[static_cast<std::size_t>(v) - 1] = m;
        } else {
            double m = score_of(scores, v);
            for (NodeId u : tree.descendants(v)) m = std::max(m, score_of(scores, u));
            out[static_cast<std::size_t>(v) - 1] = m;
        }
    }
    return out;
}

LossResult ht_loss(const LabelTree& tree, const ScoreVector& scores, const HierLabel& label,
                   WeightScheme scheme, AggMode mode) {
    return tree_loss(tree, scores, label, false, 0.0, scheme, mode);
}

LossResult fht_loss(const LabelTree& tree, const ScoreVector& scores, const HierLabel& label,
                    double gamma, WeightScheme scheme, AggMode mode) {
    return tree_loss(tree, scores, label, true, gamma, scheme, mode);
}

}  // namespace dhk
