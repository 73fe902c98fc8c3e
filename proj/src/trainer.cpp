#include "dhk/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dhk/inference.hpp"
#include "dhk/rng.hpp"

namespace dhk {

namespace {

void put_u32le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64le(std::string& out, double x) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, 8);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

std::uint32_t get_u32le(const unsigned char* p) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

double get_f64le(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
    double x;
    std::memcpy(&x, &bits, 8);
    return x;
}

std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void matvec(const Mat& w, const std::vector<double>& x, const std::vector<double>& bias,
            std::vector<double>& out) {
    out.assign(static_cast<std::size_t>(w.rows), 0.0);
    for (int r = 0; r < w.rows; ++r) {
        double acc = bias[static_cast<std::size_t>(r)];
        const double* row = &w.a[static_cast<std::size_t>(r) * w.cols];
        for (int c = 0; c < w.cols; ++c) acc += row[c] * x[static_cast<std::size_t>(c)];
        out[static_cast<std::size_t>(r)] = acc;
    }
}

LossResult classification_loss(const LabelTree& tree, const std::vector<double>& scores, const HierLabel& label,
                               const TrainConfig& cfg) {
    switch (cfg.loss) {
        case LossKind::Bce: return bce_loss(scores, label);
        case LossKind::Ht: return ht_loss(tree, scores, label, cfg.weights, cfg.mode);
        case LossKind::Fht:
        case LossKind::Dhk: return fht_loss(tree, scores, label, cfg.gamma, cfg.weights, cfg.mode);
    }
    fail(Errc::config_parse, "unknown loss kind");
}

void require_positive(double v, const char* field) {
    if (!(v > 0.0)) fail(Errc::config_parse, std::string(field) + " must be positive");
}

}  // namespace

Network init_network(int in_dim, const std::vector<int>& hidden_widths, int out_nodes, std::uint64_t seed) {
    if (hidden_widths.empty()) fail(Errc::invalid_shape, "at least one hidden layer is required");
    for (int w : hidden_widths)
        if (w < 2) fail(Errc::invalid_shape, "hidden widths must be >= 2");
    if (in_dim < 1 || out_nodes < 1) fail(Errc::invalid_shape, "input and output dimensions must be >= 1");

    Network net;
    net.in_dim = in_dim;
    net.out_nodes = out_nodes;
    std::vector<int> widths;
    widths.push_back(in_dim);
    widths.insert(widths.end(), hidden_widths.begin(), hidden_widths.end());
    widths.push_back(out_nodes);

    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        Mat w(widths[i + 1], widths[i]);
        const double scale = 1.0 / std::sqrt(static_cast<double>(widths[i]));
        for (double& x : w.a) x = uniform(rng, -scale, scale);
        net.w.push_back(std::move(w));
        net.b.emplace_back(static_cast<std::size_t>(widths[i + 1]), 0.0);
    }
    return net;
}

long long param_count(const Network& net) {
    long long n = 0;
    for (std::size_t i = 0; i < net.w.size(); ++i)
        n += static_cast<long long>(net.w[i].a.size()) + static_cast<long long>(net.b[i].size());
    return n;
}

ForwardCache forward(const Network& net, const std::vector<double>& features) {
    if (static_cast<int>(features.size()) != net.in_dim)
        fail(Errc::dimension_mismatch, "feature length " + std::to_string(features.size()) +
                                           " does not match network input " + std::to_string(net.in_dim));
    ForwardCache cache;
    cache.act.reserve(net.w.size());
    cache.act.push_back(features);
    std::vector<double> pre;
    const int hidden = net.layer_count() - 1;
    for (int i = 0; i < hidden; ++i) {
        matvec(net.w[static_cast<std::size_t>(i)], cache.act.back(), net.b[static_cast<std::size_t>(i)], pre);
        for (double& x : pre) x = std::tanh(x);
        cache.act.push_back(pre);
    }
    matvec(net.w.back(), cache.act.back(), net.b.back(), cache.logits);
    cache.scores.resize(cache.logits.size());
    for (std::size_t k = 0; k < cache.logits.size(); ++k)
        cache.scores[k] = 1.0 / (1.0 + std::exp(-cache.logits[k]));
    return cache;
}

ParamGrads zero_grads(const Network& net) {
    ParamGrads g;
    for (std::size_t i = 0; i < net.w.size(); ++i) {
        g.w.emplace_back(net.w[i].rows, net.w[i].cols);
        g.b.emplace_back(net.b[i].size(), 0.0);
    }
    return g;
}

void backward(const Network& net, const ForwardCache& cache, const std::vector<double>& d_logits,
              const std::vector<double>& d_embedding, ParamGrads& grads) {
    const int head = net.layer_count() - 1;
    // head layer
    {
        Mat& gw = grads.w[static_cast<std::size_t>(head)];
        auto& gb = grads.b[static_cast<std::size_t>(head)];
        const auto& in = cache.act[static_cast<std::size_t>(head)];
        for (int r = 0; r < gw.rows; ++r) {
            const double d = d_logits[static_cast<std::size_t>(r)];
            gb[static_cast<std::size_t>(r)] += d;
            for (int c = 0; c < gw.cols; ++c) gw.at(r, c) += d * in[static_cast<std::size_t>(c)];
        }
    }
    // gradient reaching the last hidden activation
    std::vector<double> d_act(static_cast<std::size_t>(net.w[static_cast<std::size_t>(head)].cols), 0.0);
    for (int c = 0; c < net.w[static_cast<std::size_t>(head)].cols; ++c) {
        double acc = 0.0;
        for (int r = 0; r < net.w[static_cast<std::size_t>(head)].rows; ++r)
            acc += net.w[static_cast<std::size_t>(head)].at(r, c) * d_logits[static_cast<std::size_t>(r)];
        d_act[static_cast<std::size_t>(c)] = acc;
    }
    if (!d_embedding.empty())
        for (std::size_t c = 0; c < d_act.size(); ++c) d_act[c] += d_embedding[c];

    for (int i = head - 1; i >= 0; --i) {
        const auto& out = cache.act[static_cast<std::size_t>(i) + 1];
        std::vector<double> d_pre(out.size());
        for (std::size_t k = 0; k < out.size(); ++k) d_pre[k] = d_act[k] * (1.0 - out[k] * out[k]);
        Mat& gw = grads.w[static_cast<std::size_t>(i)];
        auto& gb = grads.b[static_cast<std::size_t>(i)];
        const auto& in = cache.act[static_cast<std::size_t>(i)];
        for (int r = 0; r < gw.rows; ++r) {
            const double d = d_pre[static_cast<std::size_t>(r)];
            gb[static_cast<std::size_t>(r)] += d;
            for (int c = 0; c < gw.cols; ++c) gw.at(r, c) += d * in[static_cast<std::size_t>(c)];
        }
        if (i > 0) {
            d_act.assign(in.size(), 0.0);
            for (int c = 0; c < gw.cols; ++c) {
                double acc = 0.0;
                for (int r = 0; r < gw.rows; ++r)
                    acc += net.w[static_cast<std::size_t>(i)].at(r, c) * d_pre[static_cast<std::size_t>(r)];
                d_act[static_cast<std::size_t>(c)] = acc;
            }
        }
    }
}

void validate(const TrainConfig& cfg) {
    if (cfg.gamma < 0.0 || cfg.gamma > 5.0)
        fail(Errc::gamma_out_of_range, "gamma must lie in [0,5], got " + std::to_string(cfg.gamma));
    if (cfg.alpha < 0.0 || cfg.alpha > 0.5)
        fail(Errc::config_parse, "alpha must lie in [0,0.5], got " + std::to_string(cfg.alpha));
    require_positive(cfg.m_eps, "m_eps");
    require_positive(cfg.lr0, "lr0");
    require_positive(cfg.adam_eps, "adam_eps");
    if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 || cfg.beta2 >= 1.0)
        fail(Errc::config_parse, "adam betas must lie in [0,1)");
    if (cfg.epochs < 0) fail(Errc::config_parse, "epochs must be >= 0");
    if (cfg.batch_size < 1) fail(Errc::config_parse, "batch_size must be >= 1");
    if (cfg.restart_period < 1) fail(Errc::config_parse, "restart_period must be >= 1");
    if (cfg.mode.is_smooth && cfg.mode.beta <= 0.0) fail(Errc::non_positive_beta, "smooth beta must be positive");
    if (cfg.hidden.empty()) fail(Errc::invalid_shape, "at least one hidden layer is required");
}

BatchResult joint_loss(const LabelTree& tree, const Network& net, const std::vector<FeatureSample>& batch,
                       const TrainConfig& cfg, std::uint64_t mining_seed) {
    if (batch.empty()) fail(Errc::empty_dataset, "empty batch");
    const auto bsize = static_cast<double>(batch.size());

    std::vector<ForwardCache> caches;
    std::vector<LossResult> cls;
    std::vector<std::vector<double>> embeddings;
    std::vector<NodeId> leaves;
    caches.reserve(batch.size());
    cls.reserve(batch.size());
    for (const FeatureSample& s : batch) {
        caches.push_back(forward(net, s.features));
        const HierLabel label = tree.expand_leaf_label(s.leaf);
        cls.push_back(classification_loss(tree, caches.back().scores, label, cfg));
        embeddings.push_back(caches.back().embedding());
        leaves.push_back(s.leaf);
    }

    BatchResult r;
    r.grads = zero_grads(net);
    for (const LossResult& c : cls) r.cls += c.value;
    r.cls /= bsize;

    const bool triplet_path = cfg.loss == LossKind::Dhk && cfg.alpha > 0.0;
    GttResult gtt;
    std::vector<Triplet> triplets;
    if (triplet_path) {
        triplets = mine_triplets(leaves, tree, mining_seed, cfg.m_eps);
        gtt = gtt_loss(embeddings, triplets, cfg.measure);
        r.gtt = gtt.value;
        r.triplets = static_cast<int>(triplets.size());
    }
    r.joint = r.cls + (triplet_path ? cfg.alpha * r.gtt : 0.0);

    std::vector<double> d_logits, d_embed;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        d_logits = cls[i].grad_logits;
        for (double& g : d_logits) g /= bsize;
        d_embed.clear();
        if (triplet_path) {
            d_embed = gtt.grad_embeddings[i];
            for (double& g : d_embed) g *= cfg.alpha;
        }
        backward(net, caches[i], d_logits, d_embed, r.grads);
    }
    return r;
}

AdamState init_adam(const Network& net) {
    AdamState s;
    for (std::size_t i = 0; i < net.w.size(); ++i) {
        s.mw.emplace_back(net.w[i].rows, net.w[i].cols);
        s.vw.emplace_back(net.w[i].rows, net.w[i].cols);
        s.mb.emplace_back(net.b[i].size(), 0.0);
        s.vb.emplace_back(net.b[i].size(), 0.0);
    }
    return s;
}

void adam_step(Network& net, const ParamGrads& grads, AdamState& state, double lr, const TrainConfig& cfg) {
    if (grads.w.size() != net.w.size() || state.mw.size() != net.w.size())
        fail(Errc::shape_mismatch, "gradient/state layer count does not match the network");
    ++state.t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    auto update = [&](double& p, double g, double& m, double& v) {
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
        p -= lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.adam_eps);
    };
    for (std::size_t i = 0; i < net.w.size(); ++i) {
        if (grads.w[i].a.size() != net.w[i].a.size() || grads.b[i].size() != net.b[i].size())
            fail(Errc::shape_mismatch, "gradient shape does not match layer " + std::to_string(i));
        for (std::size_t k = 0; k < net.w[i].a.size(); ++k)
            update(net.w[i].a[k], grads.w[i].a[k], state.mw[i].a[k], state.vw[i].a[k]);
        for (std::size_t k = 0; k < net.b[i].size(); ++k)
            update(net.b[i][k], grads.b[i][k], state.mb[i][k], state.vb[i][k]);
    }
}

double cosine_lr(int epoch, double lr0, int period) {
    if (period < 1) fail(Errc::config_parse, "restart period must be >= 1");
    const int phase = epoch % period;
    return lr0 * 0.5 * (1.0 + std::cos(3.14159265358979323846 * phase / period));
}

double leaf_accuracy(const LabelTree& tree, const Network& net, const std::vector<FeatureSample>& data) {
    if (data.empty()) return 0.0;
    long long correct = 0;
    for (const FeatureSample& s : data) {
        const ForwardCache cache = forward(net, s.features);
        if (infer_path(tree, cache.scores).leaf == s.leaf) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train(const LabelTree& tree, const std::vector<FeatureSample>& train_data,
                  const std::vector<FeatureSample>& eval_data, const TrainConfig& cfg) {
    validate(cfg);
    if (train_data.empty()) fail(Errc::empty_dataset, "training set is empty");
    for (const FeatureSample& s : train_data)
        if (s.leaf < 0 || s.leaf >= tree.node_count() || !tree.is_leaf(s.leaf))
            fail(Errc::label_not_in_tree, "training label is not a leaf of the tree");
    const int in_dim = static_cast<int>(train_data[0].features.size());

    TrainResult result;
    result.net = init_network(in_dim, cfg.hidden, tree.node_count() - 1, cfg.seed);
    AdamState adam = init_adam(result.net);

    std::vector<std::size_t> perm(train_data.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;

    std::vector<FeatureSample> batch;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cosine_lr(epoch, cfg.lr0, cfg.restart_period);
        std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, 0xE90C0000ULL + static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = 0; i + 1 < perm.size(); ++i)
            std::swap(perm[i], perm[i + bounded(shuffle_rng, perm.size() - i)]);

        double cls_sum = 0.0, gtt_sum = 0.0, joint_sum = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < perm.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(perm.size(), start + static_cast<std::size_t>(cfg.batch_size));
            batch.clear();
            for (std::size_t i = start; i < stop; ++i) batch.push_back(train_data[perm[i]]);
            const std::uint64_t mining_seed =
                mix_seed(cfg.seed, 0xB47C0000ULL + static_cast<std::uint64_t>(epoch) * 0x10000ULL + batch_index);
            const BatchResult br = joint_loss(tree, result.net, batch, cfg, mining_seed);
            adam_step(result.net, br.grads, adam, lr, cfg);
            const auto n = static_cast<double>(batch.size());
            cls_sum += br.cls * n;
            gtt_sum += br.gtt * n;
            joint_sum += br.joint * n;
            ++batch_index;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        rec.fht = cls_sum / static_cast<double>(train_data.size());
        rec.gtt = gtt_sum / static_cast<double>(train_data.size());
        rec.joint = joint_sum / static_cast<double>(train_data.size());
        rec.train_acc = leaf_accuracy(tree, result.net, train_data);
        rec.eval_acc = leaf_accuracy(tree, result.net, eval_data);
        result.history.push_back(rec);
    }
    return result;
}

std::string history_csv(const TrainHistory& history) {
    std::string out = "epoch,lr,fht,gtt,joint,train_acc,eval_acc\n";
    for (const EpochRecord& r : history) {
        out += std::to_string(r.epoch);
        out += ',';
        out += format_double(r.lr);
        out += ',';
        out += format_double(r.fht);
        out += ',';
        out += format_double(r.gtt);
        out += ',';
        out += format_double(r.joint);
        out += ',';
        out += format_double(r.train_acc);
        out += ',';
        out += format_double(r.eval_acc);
        out += '\n';
    }
    return out;
}

void save_checkpoint(const std::string& path, const Network& net) {
    std::string buf = "DHKM";
    put_u32le(buf, static_cast<std::uint32_t>(net.layer_count()) + 1);
    put_u32le(buf, static_cast<std::uint32_t>(net.in_dim));
    for (const Mat& w : net.w) put_u32le(buf, static_cast<std::uint32_t>(w.rows));
    for (std::size_t i = 0; i < net.w.size(); ++i) {
        for (double x : net.w[i].a) put_f64le(buf, x);
        for (double x : net.b[i]) put_f64le(buf, x);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Errc::io_error, "cannot open for writing: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) fail(Errc::io_error, "write failed: " + path);
}

Network load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io_error, "cannot open checkpoint: " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 8 || buf.compare(0, 4, "DHKM") != 0)
        fail(Errc::checkpoint_corrupt, "bad checkpoint magic: " + path);
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
    const std::uint32_t n_widths = get_u32le(p + 4);
    if (n_widths < 3 || n_widths > 64 || buf.size() < 8 + 4ull * n_widths)
        fail(Errc::checkpoint_corrupt, "truncated checkpoint header: " + path);
    std::vector<int> widths(n_widths);
    for (std::uint32_t i = 0; i < n_widths; ++i) {
        const std::uint32_t w = get_u32le(p + 8 + 4ull * i);
        if (w < 1 || w > 1u << 20) fail(Errc::checkpoint_corrupt, "implausible layer width in " + path);
        widths[i] = static_cast<int>(w);
    }

    std::size_t expect = 8 + 4ull * n_widths;
    for (std::uint32_t i = 0; i + 1 < n_widths; ++i)
        expect += 8ull * (static_cast<std::size_t>(widths[i]) * widths[i + 1] + widths[i + 1]);
    if (buf.size() != expect) fail(Errc::checkpoint_corrupt, "checkpoint size mismatch: " + path);

    Network net;
    net.in_dim = widths[0];
    net.out_nodes = widths[n_widths - 1];
    std::size_t off = 8 + 4ull * n_widths;
    for (std::uint32_t i = 0; i + 1 < n_widths; ++i) {
        Mat w(widths[i + 1], widths[i]);
        for (double& x : w.a) {
            x = get_f64le(p + off);
            off += 8;
        }
        std::vector<double> b(static_cast<std::size_t>(widths[i + 1]));
        for (double& x : b) {
            x = get_f64le(p + off);
            off += 8;
        }
        net.w.push_back(std::move(w));
        net.b.push_back(std::move(b));
    }
    return net;
}

bool joint_case_kinked(const LabelTree& tree, const Network& net, const std::vector<FeatureSample>& batch,
                       const TrainConfig& cfg, std::uint64_t mining_seed) {
    std::vector<std::vector<double>> embeddings;
    std::vector<NodeId> leaves;
    for (const FeatureSample& s : batch) {
        const ForwardCache cache = forward(net, s.features);
        embeddings.push_back(cache.embedding());
        leaves.push_back(s.leaf);
        if (!cfg.mode.is_smooth && cfg.loss != LossKind::Bce) {
            const HierLabel label = tree.expand_leaf_label(s.leaf);
            for (NodeId v = 1; v < tree.node_count(); ++v) {
                const auto group = label[static_cast<std::size_t>(v)] ? tree.ancestors(v) : tree.descendants(v);
                if (group.size() < 2) continue;
                std::vector<double> xs;
                for (NodeId u : group) xs.push_back(cache.scores[static_cast<std::size_t>(u) - 1]);
                std::sort(xs.begin(), xs.end());
                const double gap = label[static_cast<std::size_t>(v)] ? xs[1] - xs[0]
                                                                      : xs[xs.size() - 1] - xs[xs.size() - 2];
                if (gap < 1e-4) return true;
            }
        }
    }
    if (cfg.loss == LossKind::Dhk && cfg.alpha > 0.0) {
        for (const Triplet& t : mine_triplets(leaves, tree, mining_seed, cfg.m_eps)) {
            const double slack = pair_distance(embeddings[static_cast<std::size_t>(t.anchor_idx)],
                                               embeddings[static_cast<std::size_t>(t.pos_idx)], cfg.measure) -
                                 pair_distance(embeddings[static_cast<std::size_t>(t.anchor_idx)],
                                               embeddings[static_cast<std::size_t>(t.neg_idx)], cfg.measure) +
                                 t.margin;
            if (std::abs(slack) < 1e-3) return true;
        }
    }
    return false;
}

GradCheckReport gradient_check(const LabelTree& tree, const TrainConfig& cfg, int trials, std::uint64_t seed) {
    if (trials < 1) fail(Errc::config_parse, "trials must be >= 1");
    GradCheckReport report;
    constexpr double kStep = 1e-6;
    constexpr int kBatch = 3;
    const int in_dim = 5;
    const std::vector<int> hidden = {4, 3};

    for (int trial = 0; trial < trials; ++trial) {
        std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(trial)));
        Network net = init_network(in_dim, hidden, tree.node_count() - 1, rng());
        TrainConfig c = cfg;
        c.hidden = hidden;

        std::vector<FeatureSample> batch(kBatch);
        for (FeatureSample& s : batch) {
            s.features.resize(static_cast<std::size_t>(in_dim));
            for (double& x : s.features) x = uniform(rng, -1.0, 1.0);
            s.leaf = tree.leaves()[bounded(rng, tree.leaves().size())];
        }
        const std::uint64_t mining_seed = rng();

        if (joint_case_kinked(tree, net, batch, c, mining_seed)) {
            ++report.skipped_ties;
            continue;
        }

        const BatchResult analytic = joint_loss(tree, net, batch, c, mining_seed);
        auto probe = [&](std::size_t layer, bool is_bias, std::size_t k) -> double {
            double* p = is_bias ? &net.b[layer][k] : &net.w[layer].a[k];
            const double saved = *p;
            *p = saved + kStep;
            const double up = joint_loss(tree, net, batch, c, mining_seed).joint;
            *p = saved - kStep;
            const double down = joint_loss(tree, net, batch, c, mining_seed).joint;
            *p = saved;
            return (up - down) / (2.0 * kStep);
        };
        for (std::size_t layer = 0; layer < net.w.size(); ++layer) {
            for (std::size_t k = 0; k < net.w[layer].a.size(); ++k) {
                const double fd = probe(layer, false, k);
                const double an = analytic.grads.w[layer].a[k];
                const double err = std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
                report.max_rel_err = std::max(report.max_rel_err, err);
            }
            for (std::size_t k = 0; k < net.b[layer].size(); ++k) {
                const double fd = probe(layer, true, k);
                const double an = analytic.grads.b[layer][k];
                const double err = std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
                report.max_rel_err = std::max(report.max_rel_err, err);
            }
        }
        ++report.cases;
    }
    return report;
}

}  // namespace dhk
