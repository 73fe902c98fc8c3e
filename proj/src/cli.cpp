#include "dhk/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "dhk/inference.hpp"
#include "dhk/rng.hpp"

namespace dhk::cli {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& value) {
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (end != value.c_str() + value.size() || value.empty())
        fail(Errc::config_parse, "key '" + key + "': expected a number, got '" + value + "'");
    return v;
}

long long parse_int(const std::string& key, const std::string& value) {
    char* end = nullptr;
    const long long v = std::strtoll(value.c_str(), &end, 10);
    if (end != value.c_str() + value.size() || value.empty())
        fail(Errc::config_parse, "key '" + key + "': expected an integer, got '" + value + "'");
    return v;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
    std::vector<int> out;
    std::istringstream in(value);
    std::string item;
    while (std::getline(in, item, ','))
        out.push_back(static_cast<int>(parse_int(key, trim(item))));
    if (out.empty()) fail(Errc::config_parse, "key '" + key + "': empty list");
    return out;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Errc::io_error, "cannot open for writing: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) fail(Errc::io_error, "write failed: " + path);
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(Errc::io_error, "cannot create directory '" + dir + "': " + ec.message());
}

template <typename F>
int guarded(F&& body) {
    try {
        body();
        return 0;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace

int exit_code_for(Errc code) {
    switch (code) {
        case Errc::io_error: return 2;
        default: return 1;  // validation / parse
    }
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "tree") cfg.tree_path = value;
    else if (key == "data") cfg.data_path = value;
    else if (key == "out") cfg.out_dir = value;
    else if (key == "seed") cfg.train.seed = static_cast<std::uint64_t>(parse_int(key, value));
    else if (key == "loss") {
        if (value == "bce") cfg.train.loss = LossKind::Bce;
        else if (value == "ht") cfg.train.loss = LossKind::Ht;
        else if (value == "fht") cfg.train.loss = LossKind::Fht;
        else if (value == "dhk") cfg.train.loss = LossKind::Dhk;
        else fail(Errc::config_parse, "key 'loss': expected bce|ht|fht|dhk, got '" + value + "'");
    } else if (key == "weights") {
        if (value == "none") cfg.train.weights = WeightScheme::None;
        else if (value == "nhw") cfg.train.weights = WeightScheme::Nhw;
        else if (value == "phw") cfg.train.weights = WeightScheme::Phw;
        else fail(Errc::config_parse, "key 'weights': expected none|nhw|phw, got '" + value + "'");
    } else if (key == "mode") {
        if (value == "hard") cfg.smooth_mode = false;
        else if (value == "smooth") cfg.smooth_mode = true;
        else fail(Errc::config_parse, "key 'mode': expected hard|smooth, got '" + value + "'");
    } else if (key == "smooth_beta") {
        cfg.smooth_beta = parse_double(key, value);
        if (cfg.smooth_beta <= 0.0) fail(Errc::config_parse, "key 'smooth_beta': must be positive");
    } else if (key == "measure") {
        if (value == "cosine") cfg.train.measure = DistanceMeasure::Cosine;
        else if (value == "euclidean") cfg.train.measure = DistanceMeasure::Euclidean;
        else fail(Errc::config_parse, "key 'measure': expected cosine|euclidean, got '" + value + "'");
    } else if (key == "gamma") {
        cfg.train.gamma = parse_double(key, value);
        if (cfg.train.gamma < 0.0 || cfg.train.gamma > 5.0)
            fail(Errc::config_parse, "key 'gamma': must lie in [0,5], got " + value);
    } else if (key == "m_eps") cfg.train.m_eps = parse_double(key, value);
    else if (key == "alpha") {
        cfg.train.alpha = parse_double(key, value);
        if (cfg.train.alpha < 0.0 || cfg.train.alpha > 0.5)
            fail(Errc::config_parse, "key 'alpha': must lie in [0,0.5], got " + value);
    } else if (key == "lr0") cfg.train.lr0 = parse_double(key, value);
    else if (key == "beta1") cfg.train.beta1 = parse_double(key, value);
    else if (key == "beta2") cfg.train.beta2 = parse_double(key, value);
    else if (key == "adam_eps") cfg.train.adam_eps = parse_double(key, value);
    else if (key == "epochs") cfg.train.epochs = static_cast<int>(parse_int(key, value));
    else if (key == "batch_size") cfg.train.batch_size = static_cast<int>(parse_int(key, value));
    else if (key == "restart_period") cfg.train.restart_period = static_cast<int>(parse_int(key, value));
    else if (key == "hidden") cfg.train.hidden = parse_int_list(key, value);
    else if (key == "window") cfg.window = static_cast<int>(parse_int(key, value));
    else if (key == "step") cfg.step = static_cast<int>(parse_int(key, value));
    else if (key == "stft_window") cfg.stft_window = static_cast<int>(parse_int(key, value));
    else if (key == "stft_hop") cfg.stft_hop = static_cast<int>(parse_int(key, value));
    else if (key == "bands") cfg.bands = static_cast<int>(parse_int(key, value));
    else if (key == "noise_ratio") {
        cfg.noise_ratio = parse_double(key, value);
        if (cfg.noise_ratio < 0.0 || cfg.noise_ratio > 1.0)
            fail(Errc::config_parse, "key 'noise_ratio': must lie in [0,1], got " + value);
    } else {
        fail(Errc::config_parse, "unknown config key '" + key + "'");
    }
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io_error, "cannot open config: " + path);
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            fail(Errc::config_parse, "config line " + std::to_string(lineno) + ": expected 'key = value'");
        try {
            set_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const Error& e) {
            if (e.code() != Errc::config_parse) throw;
            fail(Errc::config_parse, "config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return cfg;
}

TrainConfig materialize(const RunConfig& cfg) {
    TrainConfig t = cfg.train;
    t.mode = cfg.smooth_mode ? AggMode::smooth(cfg.smooth_beta) : AggMode::hard();
    validate(t);
    return t;
}

std::vector<FeatureSample> preprocess(const std::vector<SignalStream>& streams, const RunConfig& cfg) {
    std::vector<FeatureSample> out;
    for (const SignalStream& stream : streams) {
        std::vector<SignalStream> windows;
        if (cfg.window > 0)
            windows = sliding_window(stream, cfg.window, cfg.step > 0 ? cfg.step : cfg.window);
        else
            windows.push_back(stream);
        for (const SignalStream& win : windows) {
            const ComplexMatrix spec = stft(win.samples, cfg.stft_window, cfg.stft_hop, WindowFn::Hann);
            const Spectrogram db = log_spectrogram(magnitude(spec));
            FeatureSample s;
            s.features = band_features(db, cfg.bands);
            s.leaf = win.leaf_label;
            out.push_back(std::move(s));
        }
    }
    return out;
}

void stratified_split(const std::vector<SignalStream>& streams, std::uint64_t seed,
                      std::vector<SignalStream>& train_out, std::vector<SignalStream>& test_out) {
    train_out.clear();
    test_out.clear();
    std::map<NodeId, std::vector<std::size_t>> by_leaf;
    for (std::size_t i = 0; i < streams.size(); ++i) by_leaf[streams[i].leaf_label].push_back(i);
    for (auto& [leaf, idx] : by_leaf) {
        std::mt19937_64 rng(mix_seed(seed, 0x5717ULL + static_cast<std::uint64_t>(leaf)));
        for (std::size_t i = 0; i + 1 < idx.size(); ++i)
            std::swap(idx[i], idx[i + bounded(rng, idx.size() - i)]);
        const std::size_t n_train = idx.size() - idx.size() / 5;  // 80/20
        for (std::size_t i = 0; i < idx.size(); ++i)
            (i < n_train ? train_out : test_out).push_back(streams[idx[i]]);
    }
}

int cmd_gen_data(const std::string& tree_path, int per_leaf, int length, double snr_db, std::uint64_t seed,
                 const std::string& out_path) {
    return guarded([&] {
        const LabelTree tree = LabelTree::from_file(tree_path);
        const auto streams = synth_dataset(tree, per_leaf, length, snr_db, seed);
        write_dataset(out_path, streams, tree);
        std::cout << "wrote " << streams.size() << " streams (" << tree.leaf_count() << " leaves x " << per_leaf
                  << ") to " << out_path << "\n";
    });
}

int cmd_train(const RunConfig& cfg) {
    return guarded([&] {
        const TrainConfig tcfg = materialize(cfg);
        const LabelTree tree = LabelTree::from_file(cfg.tree_path);
        const auto streams = read_dataset(cfg.data_path, tree);
        if (streams.empty()) fail(Errc::empty_dataset, "dataset is empty: " + cfg.data_path);

        std::vector<SignalStream> train_streams, eval_streams;
        stratified_split(streams, tcfg.seed, train_streams, eval_streams);
        if (cfg.noise_ratio > 0.0)  // noise goes into the training split only
            train_streams = flip_labels(train_streams, cfg.noise_ratio, mix_seed(tcfg.seed, 0xF11BULL));

        const auto train_samples = preprocess(train_streams, cfg);
        const auto eval_samples = preprocess(eval_streams, cfg);

        TrainResult result = train(tree, train_samples, eval_samples, tcfg);

        ensure_dir(cfg.out_dir);
        const std::string model_path = cfg.out_dir + "/model.dhkm";
        save_checkpoint(model_path, result.net);
        write_file(cfg.out_dir + "/history.csv", history_csv(result.history));

        const auto& report_samples = eval_samples.empty() ? train_samples : eval_samples;
        std::vector<NodeId> pred, truth;
        for (const FeatureSample& s : report_samples) {
            pred.push_back(infer_path(tree, forward(result.net, s.features).scores).leaf);
            truth.push_back(s.leaf);
        }
        const MetricsReport metrics = compute_metrics(pred, truth, tree);
        write_file(cfg.out_dir + "/metrics.txt", metrics_text(metrics, tree));
        write_file(cfg.out_dir + "/metrics.json", metrics_json(metrics, tree));
        std::cout << "trained " << tcfg.epochs << " epochs on " << train_samples.size() << " samples; "
                  << (eval_samples.empty() ? "train" : "held-out") << " accuracy " << metrics.accuracy << "\n";
    });
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path, const std::string& data_path,
             const std::string& out_dir) {
    return guarded([&] {
        const LabelTree tree = LabelTree::from_file(cfg.tree_path);
        const Network net = load_checkpoint(checkpoint_path);
        const auto streams = read_dataset(data_path, tree);
        if (streams.empty()) fail(Errc::empty_dataset, "dataset is empty: " + data_path);
        const auto samples = preprocess(streams, cfg);
        std::vector<NodeId> pred, truth;
        for (const FeatureSample& s : samples) {
            pred.push_back(infer_path(tree, forward(net, s.features).scores).leaf);
            truth.push_back(s.leaf);
        }
        const MetricsReport metrics = compute_metrics(pred, truth, tree);
        ensure_dir(out_dir);
        write_file(out_dir + "/metrics.txt", metrics_text(metrics, tree));
        write_file(out_dir + "/metrics.json", metrics_json(metrics, tree));
        std::cout << metrics_text(metrics, tree);
    });
}

int cmd_infer(const RunConfig& cfg, const std::string& checkpoint_path, const std::string& data_path) {
    return guarded([&] {
        const LabelTree tree = LabelTree::from_file(cfg.tree_path);
        const Network net = load_checkpoint(checkpoint_path);
        const auto streams = read_dataset(data_path, tree);
        if (streams.empty()) fail(Errc::empty_dataset, "dataset is empty: " + data_path);
        const auto samples = preprocess({streams.front()}, cfg);  // first record
        const ForwardCache cache = forward(net, samples.front().features);
        const PathPrediction p = infer_path(tree, cache.scores);
        std::cout << "path:";
        for (std::size_t i = 0; i < p.path.size(); ++i) {
            const NodeId v = p.path[i];
            std::cout << (i ? " -> " : " ") << tree.name(v);
            if (v != tree.root()) std::cout << " (" << score_of(cache.scores, v) << ")";
        }
        std::cout << "\npath_score: " << p.path_score << "\nleaf: " << tree.name(p.leaf) << "\n";
    });
}

int cmd_grad_check(int trials, std::uint64_t seed) {
    return guarded([&] {
        // several shapes: balanced, unbalanced, chain, flat
        const std::vector<std::pair<const char*, const char*>> trees = {
            {"balanced",
             "root\tcavitation\nroot\tnon-cavitation\ncavitation\tincipient\ncavitation\tconstant\n"
             "cavitation\tchoked flow\nnon-cavitation\tturbulent\nnon-cavitation\tno flow\n"},
            {"unbalanced",
             "root\thealthy\nroot\tdamaged\ndamaged\tIR\ndamaged\tOR\nIR\tIR-1\nIR\tIR-2\nIR\tIR-3\n"
             "OR\tOR-1\nOR\tOR-2\n"},
            {"chain", "root\ta\na\tb\nb\tc\n"},
            {"flat", "root\ta\nroot\tb\nroot\tc\nroot\td\n"},
        };
        TrainConfig cfg;  // full joint objective in smooth mode
        cfg.loss = LossKind::Dhk;
        cfg.mode = AggMode::smooth(100.0);

        double worst = 0.0;
        int cases = 0, skipped = 0;
        for (std::size_t i = 0; i < trees.size(); ++i) {
            const LabelTree tree = LabelTree::from_text(trees[i].second);
            const int share = trials / static_cast<int>(trees.size()) +
                              (static_cast<int>(i) < trials % static_cast<int>(trees.size()) ? 1 : 0);
            if (share == 0) continue;
            const GradCheckReport r = gradient_check(tree, cfg, share, mix_seed(seed, i));
            std::cout << "tree " << trees[i].first << ": cases " << r.cases << ", skipped " << r.skipped_ties
                      << ", max rel err " << r.max_rel_err << "\n";
            worst = std::max(worst, r.max_rel_err);
            cases += r.cases;
            skipped += r.skipped_ties;
        }
        std::cout << "total cases " << cases << " (skipped " << skipped << "), max rel err " << worst << "\n";
        // exit 3 (invariant breach) when the analytic gradients disagree
        if (!(worst < 1e-5)) throw std::runtime_error("gradient check failed: max rel err >= 1e-5");
    });
}

int cmd_tree_show(const std::string& tree_path, bool edges_only) {
    return guarded([&] {
        const LabelTree tree = LabelTree::from_file(tree_path);
        if (edges_only) {
            std::cout << tree.to_edge_list();
            return;
        }
        std::cout << "nodes: " << tree.node_count() << "\nheight: " << tree.height()
                  << "\nleaves: " << tree.leaf_count() << "\n";
        // depth-first pretty print in canonical child order
        std::vector<NodeId> stack = {tree.root()};
        while (!stack.empty()) {
            const NodeId v = stack.back();
            stack.pop_back();
            std::cout << std::string(static_cast<std::size_t>(tree.depth(v)) * 2, ' ') << tree.name(v)
                      << " (depth " << tree.depth(v) << ")";
            if (tree.is_leaf(v)) std::cout << " *";
            std::cout << "\n";
            const auto& kids = tree.children(v);
            for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(*it);
        }
        std::cout << "pairwise leaf distance psi:\n";
        std::size_t width = 0;
        for (NodeId leaf : tree.leaves()) width = std::max(width, tree.name(leaf).size());
        width += 2;
        std::cout << std::string(width, ' ');
        for (NodeId leaf : tree.leaves()) {
            std::string n = tree.name(leaf);
            n.resize(width, ' ');
            std::cout << n;
        }
        std::cout << "\n";
        for (NodeId a : tree.leaves()) {
            std::string n = tree.name(a);
            n.resize(width, ' ');
            std::cout << n;
            for (NodeId b : tree.leaves()) {
                std::string d = std::to_string(tree.tree_distance(a, b));
                d.resize(width, ' ');
                std::cout << d;
            }
            std::cout << "\n";
        }
    });
}

}  // namespace dhk::cli
