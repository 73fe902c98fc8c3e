#include <cstdint>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "dhk/cli.hpp"

namespace {

// flags collected as (key, value) and applied over the config file
struct Overrides {
    std::vector<std::pair<std::string, std::string>> kv;
    void add_opt(CLI::App* cmd, const std::string& flag, const std::string& key, const std::string& help) {
        cmd->add_option_function<std::string>(
            flag, [this, key](const std::string& v) { kv.emplace_back(key, v); }, help);
    }
};

dhk::cli::RunConfig build_config(const std::string& config_path, const Overrides& overrides) {
    dhk::cli::RunConfig cfg;
    if (!config_path.empty()) cfg = dhk::cli::load_config(config_path);
    for (const auto& [key, value] : overrides.kv) dhk::cli::set_key(cfg, key, value);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deep hierarchical knowledge losses for fault intensity diagnosis"};
    app.require_subcommand(1);

    std::string config_path, out_path, checkpoint, data_path, tree_path;
    Overrides ov;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic hierarchical dataset");
    int per_leaf = 40, length = 4096;
    double snr_db = 20.0;
    std::uint64_t gen_seed = 1;
    gen->add_option("--tree", tree_path, "tree definition file")->required();
    gen->add_option("--per-leaf", per_leaf, "streams per leaf class");
    gen->add_option("--length", length, "samples per stream");
    gen->add_option("--snr", snr_db, "signal-to-noise ratio in dB");
    gen->add_option("--seed", gen_seed, "generation seed");
    gen->add_option("--out", out_path, "output dataset file")->required();

    auto* train = app.add_subcommand("train", "train a model on a dataset");
    train->add_option("--config", config_path, "key = value config file");
    ov.add_opt(train, "--tree", "tree", "tree definition file");
    ov.add_opt(train, "--data", "data", "dataset file");
    ov.add_opt(train, "--out", "out", "output directory");
    ov.add_opt(train, "--seed", "seed", "training seed");
    ov.add_opt(train, "--loss", "loss", "bce|ht|fht|dhk");
    ov.add_opt(train, "--weights", "weights", "none|nhw|phw");
    ov.add_opt(train, "--mode", "mode", "hard|smooth");
    ov.add_opt(train, "--noise-ratio", "noise_ratio", "label flip ratio in [0,1]");
    ov.add_opt(train, "--epochs", "epochs", "training epochs");
    ov.add_opt(train, "--batch-size", "batch_size", "batch size");
    ov.add_opt(train, "--gamma", "gamma", "focal factor in [0,5]");
    ov.add_opt(train, "--alpha", "alpha", "triplet scale in [0,0.5]");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    eval->add_option("--config", config_path, "key = value config file");
    eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    eval->add_option("--data", data_path, "dataset file")->required();
    eval->add_option("--out", out_path, "output directory for the metrics report")->required();
    ov.add_opt(eval, "--tree", "tree", "tree definition file");

    auto* infer = app.add_subcommand("infer", "predict the path for the first record of a dataset");
    infer->add_option("--config", config_path, "key = value config file");
    infer->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    infer->add_option("--data", data_path, "dataset file (first record is used)")->required();
    ov.add_opt(infer, "--tree", "tree", "tree definition file");

    auto* grad = app.add_subcommand("grad-check", "finite-difference check of the joint-loss gradients");
    int trials = 200;
    std::uint64_t gc_seed = 7;
    grad->add_option("--trials", trials, "randomized cases");
    grad->add_option("--seed", gc_seed, "case seed");

    auto* show = app.add_subcommand("tree-show", "inspect a tree definition file");
    bool edges_only = false;
    show->add_option("--tree", tree_path, "tree definition file")->required();
    show->add_flag("--edges", edges_only, "dump the canonical edge list instead of the pretty view");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return dhk::cli::cmd_gen_data(tree_path, per_leaf, length, snr_db, gen_seed, out_path);
        if (train->parsed()) return dhk::cli::cmd_train(build_config(config_path, ov));
        if (eval->parsed())
            return dhk::cli::cmd_eval(build_config(config_path, ov), checkpoint, data_path, out_path);
        if (infer->parsed()) return dhk::cli::cmd_infer(build_config(config_path, ov), checkpoint, data_path);
        if (grad->parsed()) return dhk::cli::cmd_grad_check(trials, gc_seed);
        if (show->parsed()) return dhk::cli::cmd_tree_show(tree_path, edges_only);
    } catch (const dhk::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return dhk::cli::exit_code_for(e.code());
    }
    return 0;
}
