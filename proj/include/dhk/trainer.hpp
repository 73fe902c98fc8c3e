#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dhk/grouptriplet.hpp"
#include "dhk/hierarchy.hpp"
#include "dhk/hkloss.hpp"

namespace dhk {

struct Mat {
    int rows = 0, cols = 0;
    std::vector<double> a;  // row-major
    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}
    double& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }
};

// Dense feature network: tanh hidden layers, linear head producing one logit
// per non-root tree node. The last hidden activation doubles as the metric
// embedding.
struct Network {
    int in_dim = 0;
    int out_nodes = 0;
    std::vector<Mat> w;                  // hidden layers then head
    std::vector<std::vector<double>> b;  // matching biases
    int layer_count() const { return static_cast<int>(w.size()); }
    int embedding_dim() const { return w.empty() ? 0 : w[w.size() - 2].rows; }
};

Network init_network(int in_dim, const std::vector<int>& hidden_widths, int out_nodes, std::uint64_t seed);
long long param_count(const Network& net);

struct ForwardCache {
    std::vector<std::vector<double>> act;  // act[0] = input, act[i] = layer i output
    std::vector<double> logits;
    std::vector<double> scores;  // sigmoid(logits)
    const std::vector<double>& embedding() const { return act[act.size() - 1]; }
};

ForwardCache forward(const Network& net, const std::vector<double>& features);

// Gradient accumulator with the network's parameter shapes.
struct ParamGrads {
    std::vector<Mat> w;
    std::vector<std::vector<double>> b;
};
ParamGrads zero_grads(const Network& net);

// Backpropagates one sample: d_logits is the loss gradient at the head
// output, d_embedding an extra gradient injected at the last hidden
// activation (zero-length to skip). Accumulates into grads.
void backward(const Network& net, const ForwardCache& cache, const std::vector<double>& d_logits,
              const std::vector<double>& d_embedding, ParamGrads& grads);

enum class LossKind { Bce, Ht, Fht, Dhk };

struct TrainConfig {
    LossKind loss = LossKind::Dhk;
    double gamma = 2.0;
    double m_eps = 0.15;
    double alpha = 0.1;
    WeightScheme weights = WeightScheme::Phw;
    AggMode mode = AggMode::hard();
    DistanceMeasure measure = DistanceMeasure::Cosine;
    double lr0 = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int epochs = 100;
    int batch_size = 64;
    int restart_period = 20;
    std::uint64_t seed = 0;
    std::vector<int> hidden = {32, 16};
};
void validate(const TrainConfig& cfg);

struct FeatureSample {
    std::vector<double> features;
    NodeId leaf = -1;
};

struct BatchResult {
    double joint = 0.0;
    double cls = 0.0;  // mean classification loss over the batch
    double gtt = 0.0;  // triplet loss over the batch's mined triplets
    int triplets = 0;
    ParamGrads grads;
};

// Joint objective on one batch: level-weighted classification loss (batch
// mean) plus alpha * triplet loss over triplets mined from the batch labels.
// alpha applies only for LossKind::Dhk; other kinds disable the triplet path.
BatchResult joint_loss(const LabelTree& tree, const Network& net, const std::vector<FeatureSample>& batch,
                       const TrainConfig& cfg, std::uint64_t mining_seed);

// Adam with bias correction.
struct AdamState {
    std::vector<Mat> mw, vw;
    std::vector<std::vector<double>> mb, vb;
    long long t = 0;
};
AdamState init_adam(const Network& net);
void adam_step(Network& net, const ParamGrads& grads, AdamState& state, double lr, const TrainConfig& cfg);

// Cosine annealing with warm restarts every `period` epochs:
// lr0 * 0.5 * (1 + cos(pi * (epoch mod period) / period)).
double cosine_lr(int epoch, double lr0, int period);

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0;
    double fht = 0.0;  // classification-loss column (bce/ht/fht per config)
    double gtt = 0.0;
    double joint = 0.0;
    double train_acc = 0.0;
    double eval_acc = 0.0;
};
using TrainHistory = std::vector<EpochRecord>;

struct TrainResult {
    Network net;
    TrainHistory history;
};

// Seeded-permutation mini-batch training; fully deterministic given the
// config. eval_data may be empty (eval_acc recorded as 0).
TrainResult train(const LabelTree& tree, const std::vector<FeatureSample>& train_data,
                  const std::vector<FeatureSample>& eval_data, const TrainConfig& cfg);

// Fraction of samples whose inferred path hits the true leaf.
double leaf_accuracy(const LabelTree& tree, const Network& net, const std::vector<FeatureSample>& data);

// CSV with a header row; one line per epoch.
std::string history_csv(const TrainHistory& history);

// Checkpoint: magic "DHKM", little-endian u32 width list (input, hidden...,
// output), then all parameters as little-endian f64 in layer order (weights
// row-major, then bias).
void save_checkpoint(const std::string& path, const Network& net);
Network load_checkpoint(const std::string& path);

// True when the batch sits near a non-differentiable point of the joint
// objective: a near-tied extremum under hard aggregation, or a near-zero
// triplet hinge slack.
bool joint_case_kinked(const LabelTree& tree, const Network& net, const std::vector<FeatureSample>& batch,
                       const TrainConfig& cfg, std::uint64_t mining_seed);

struct GradCheckReport {
    double max_rel_err = 0.0;
    int cases = 0;
    int skipped_ties = 0;
};

// Compares analytic joint_loss parameter gradients against central finite
// differences (step 1e-6) on tiny random networks over the given tree.
// Hard-mode cases with near-tied extrema or near-zero hinge slack are
// counted as skipped instead of failed.
GradCheckReport gradient_check(const LabelTree& tree, const TrainConfig& cfg, int trials, std::uint64_t seed);

}  // namespace dhk
