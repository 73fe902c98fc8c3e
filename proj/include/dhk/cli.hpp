#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dhk/signal.hpp"
#include "dhk/trainer.hpp"

namespace dhk::cli {

// Everything cmd_train needs: training hyperparameters plus paths,
// preprocessing parameters, and the label-noise ratio.
struct RunConfig {
    TrainConfig train;
    std::string tree_path;
    std::string data_path;
    std::string out_dir = "out";
    int window = 0;  // sliding window over raw streams; 0 = one window per stream
    int step = 0;    // 0 = window size
    int stft_window = 2048;
    int stft_hop = 512;
    int bands = 64;
    double noise_ratio = 0.0;
    bool smooth_mode = false;
    double smooth_beta = 1e4;
};

// Key-value config file: one `key = value` per line, '#' comments.
RunConfig load_config(const std::string& path);

// Applies one key (flag override or config line). Throws config_parse with
// the offending key in the message.
void set_key(RunConfig& cfg, const std::string& key, const std::string& value);

// Resolves smooth_mode/smooth_beta into cfg.train.mode and validates.
TrainConfig materialize(const RunConfig& cfg);

// Stream -> (optional sliding window) -> STFT -> dB spectrogram -> band
// features. Output order follows the input stream order.
std::vector<FeatureSample> preprocess(const std::vector<SignalStream>& streams, const RunConfig& cfg);

// Seeded stratified-by-leaf 80/20 split, canonical leaf order.
void stratified_split(const std::vector<SignalStream>& streams, std::uint64_t seed,
                      std::vector<SignalStream>& train_out, std::vector<SignalStream>& test_out);

// Commands return process exit codes: 0 success, 1 validation/parse,
// 2 I/O, 3 internal invariant breach.
int cmd_gen_data(const std::string& tree_path, int per_leaf, int length, double snr_db, std::uint64_t seed,
                 const std::string& out_path);
int cmd_train(const RunConfig& cfg);
int cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path, const std::string& data_path,
             const std::string& out_dir);
int cmd_infer(const RunConfig& cfg, const std::string& checkpoint_path, const std::string& data_path);
int cmd_grad_check(int trials, std::uint64_t seed);
int cmd_tree_show(const std::string& tree_path, bool edges_only);

int exit_code_for(Errc code);

}  // namespace dhk::cli
