#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "dhk/cli.hpp"
#include "dhk/inference.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace dhk;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("dhk_cli_test_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

const char* kCavitationTree =
    "root\tcavitation\nroot\tnon-cavitation\ncavitation\tincipient\ncavitation\tconstant\n"
    "cavitation\tchoked flow\nnon-cavitation\tturbulent\nnon-cavitation\tno flow\n";

// tiny but trainable settings
std::string small_config(const TempDir& dir, const std::string& extra = "") {
    const std::string config =
        "tree = " + dir.file("tree.txt") + "\n" +
        "data = " + dir.file("data.tsv") + "\n" +
        "out = " + dir.file("out") + "\n" +
        "seed = 3\n"
        "epochs = 8\n"
        "batch_size = 32\n"
        "hidden = 12,6\n"
        "stft_window = 256\n"
        "stft_hop = 64\n"
        "bands = 16\n" +
        extra;
    write_text(dir.file("run.cfg"), config);
    return dir.file("run.cfg");
}

struct CoutCapture {
    std::ostringstream buf;
    std::streambuf* saved;
    CoutCapture() : saved(std::cout.rdbuf(buf.rdbuf())) {}
    ~CoutCapture() { std::cout.rdbuf(saved); }
    std::string text() const { return buf.str(); }
};

}  // namespace

TEST_CASE("config parsing") {
    TempDir dir;
    write_text(dir.file("a.cfg"),
               "# comment\n"
               "gamma = 1.5\n"
               "loss = fht   # trailing comment\n"
               "hidden = 24,12\n"
               "noise_ratio = 0.1\n");
    const cli::RunConfig cfg = cli::load_config(dir.file("a.cfg"));
    CHECK(cfg.train.gamma == doctest::Approx(1.5));
    CHECK(cfg.train.loss == LossKind::Fht);
    CHECK(cfg.train.hidden == std::vector<int>{24, 12});
    CHECK(cfg.noise_ratio == doctest::Approx(0.1));

    write_text(dir.file("bad1.cfg"), "gamma = 6\n");
    try {
        cli::load_config(dir.file("bad1.cfg"));
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.code() == Errc::config_parse);
        CHECK(std::string(e.what()).find("gamma") != std::string::npos);
    }

    write_text(dir.file("bad2.cfg"), "no_such_key = 1\n");
    try {
        cli::load_config(dir.file("bad2.cfg"));
        CHECK(false);
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("no_such_key") != std::string::npos);
    }

    cli::RunConfig cfg2;
    cli::set_key(cfg2, "mode", "smooth");
    cli::set_key(cfg2, "smooth_beta", "250");
    const TrainConfig t = cli::materialize(cfg2);
    CHECK(t.mode.is_smooth);
    CHECK(t.mode.beta == doctest::Approx(250.0));
    CHECK_THROWS_AS(cli::set_key(cfg2, "mode", "fuzzy"), Error);
}

TEST_CASE("gen-data writes the expected number of records") {
    TempDir dir;
    write_text(dir.file("tree.txt"), kCavitationTree);
    CHECK(cli::cmd_gen_data(dir.file("tree.txt"), 4, 512, 30.0, 1, dir.file("data.tsv")) == 0);
    const LabelTree tree = LabelTree::from_file(dir.file("tree.txt"));
    CHECK(read_dataset(dir.file("data.tsv"), tree).size() == 20);

    // identical seed, byte-identical file
    CHECK(cli::cmd_gen_data(dir.file("tree.txt"), 4, 512, 30.0, 1, dir.file("data2.tsv")) == 0);
    CHECK(read_text(dir.file("data.tsv")) == read_text(dir.file("data2.tsv")));
    CHECK(cli::cmd_gen_data(dir.file("tree.txt"), 4, 512, 30.0, 2, dir.file("data3.tsv")) == 0);
    CHECK(read_text(dir.file("data.tsv")) != read_text(dir.file("data3.tsv")));

    // validation failures happen before any write
    CHECK(cli::cmd_gen_data(dir.file("tree.txt"), 0, 512, 30.0, 1, dir.file("none.tsv")) == 1);
    CHECK_FALSE(fs::exists(dir.file("none.tsv")));

    // unwritable output is an I/O failure
    CHECK(cli::cmd_gen_data(dir.file("tree.txt"), 2, 512, 30.0, 1, "/nonexistent_dir/x/data.tsv") == 2);
    CHECK(cli::cmd_gen_data(dir.file("missing.txt"), 2, 512, 30.0, 1, dir.file("d.tsv")) == 2);
}

TEST_CASE("train, eval, and infer round-trip") {
    TempDir dir;
    write_text(dir.file("tree.txt"), kCavitationTree);
    REQUIRE(cli::cmd_gen_data(dir.file("tree.txt"), 10, 1024, 30.0, 2, dir.file("data.tsv")) == 0);
    const cli::RunConfig cfg = cli::load_config(small_config(dir));

    {
        CoutCapture cap;
        REQUIRE(cli::cmd_train(cfg) == 0);
    }
    CHECK(fs::exists(dir.file("out/model.dhkm")));
    CHECK(fs::exists(dir.file("out/history.csv")));
    CHECK(fs::exists(dir.file("out/metrics.txt")));
    CHECK(fs::exists(dir.file("out/metrics.json")));

    const std::string history = read_text(dir.file("out/history.csv"));
    CHECK(history.find("epoch,lr,fht,gtt,joint,train_acc,eval_acc\n") == 0);
    CHECK(std::count(history.begin(), history.end(), '\n') == 9);  // header + 8 epochs

    // held-out metrics from training
    const std::string held_out = read_text(dir.file("out/metrics.txt"));
    const double held_out_acc = std::stod(held_out.substr(held_out.find("accuracy: ") + 10));

    // evaluating the full dataset (train + held-out) cannot fall below the
    // held-out score once training has converged on this easy set
    std::string eval_out;
    {
        CoutCapture cap;
        REQUIRE(cli::cmd_eval(cfg, dir.file("out/model.dhkm"), dir.file("data.tsv"), dir.file("eval_out")) == 0);
        eval_out = cap.text();
    }
    const double full_acc = std::stod(eval_out.substr(eval_out.find("accuracy: ") + 10));
    CHECK(full_acc >= held_out_acc);

    // infer on the first record prints a root-to-leaf path
    std::string infer_out;
    {
        CoutCapture cap;
        REQUIRE(cli::cmd_infer(cfg, dir.file("out/model.dhkm"), dir.file("data.tsv")) == 0);
        infer_out = cap.text();
    }
    CHECK(infer_out.find("path: root -> ") != std::string::npos);
    CHECK(infer_out.find("leaf: ") != std::string::npos);
    CHECK(infer_out.find("path_score: ") != std::string::npos);

    // corrupt checkpoint magic is a validation failure
    write_text(dir.file("broken.dhkm"), "XXXXgarbage");
    CHECK(cli::cmd_eval(cfg, dir.file("broken.dhkm"), dir.file("data.tsv"), dir.file("eval2")) == 1);

    // empty dataset is rejected before any work
    write_text(dir.file("empty.tsv"), "");
    CHECK(cli::cmd_eval(cfg, dir.file("out/model.dhkm"), dir.file("empty.tsv"), dir.file("eval3")) == 1);

    // malformed record reports its line number
    write_text(dir.file("badrec.tsv"), "0\tincipient\t1.0,2.0\tzzz\n");
    CHECK(cli::cmd_infer(cfg, dir.file("out/model.dhkm"), dir.file("badrec.tsv")) == 1);
}

TEST_CASE("train supports the bce ablation switch") {
    TempDir dir;
    write_text(dir.file("tree.txt"), kCavitationTree);
    REQUIRE(cli::cmd_gen_data(dir.file("tree.txt"), 6, 1024, 30.0, 4, dir.file("data.tsv")) == 0);
    cli::RunConfig cfg = cli::load_config(small_config(dir));
    cli::set_key(cfg, "loss", "bce");
    cli::set_key(cfg, "out", dir.file("out_bce"));
    CoutCapture cap;
    CHECK(cli::cmd_train(cfg) == 0);
    CHECK(fs::exists(dir.file("out_bce/model.dhkm")));
}

TEST_CASE("training runs are byte-identical for identical config and seed") {
    TempDir dir;
    write_text(dir.file("tree.txt"), kCavitationTree);
    REQUIRE(cli::cmd_gen_data(dir.file("tree.txt"), 6, 1024, 25.0, 5, dir.file("data.tsv")) == 0);

    cli::RunConfig cfg = cli::load_config(small_config(dir, "noise_ratio = 0.1\n"));
    cli::RunConfig cfg2 = cfg;
    cli::set_key(cfg2, "out", dir.file("out2"));
    {
        CoutCapture cap;
        REQUIRE(cli::cmd_train(cfg) == 0);
        REQUIRE(cli::cmd_train(cfg2) == 0);
    }
    CHECK(read_text(dir.file("out/model.dhkm")) == read_text(dir.file("out2/model.dhkm")));
    CHECK(read_text(dir.file("out/history.csv")) == read_text(dir.file("out2/history.csv")));
    CHECK(read_text(dir.file("out/metrics.json")) == read_text(dir.file("out2/metrics.json")));
}

TEST_CASE("tree-show output") {
    TempDir dir;
    write_text(dir.file("tree.txt"), kCavitationTree);

    std::string pretty;
    {
        CoutCapture cap;
        REQUIRE(cli::cmd_tree_show(dir.file("tree.txt"), false) == 0);
        pretty = cap.text();
    }
    CHECK(pretty.find("height: 2") != std::string::npos);
    CHECK(pretty.find("leaves: 5") != std::string::npos);
    CHECK(pretty.find("incipient (depth 2) *") != std::string::npos);
    CHECK(pretty.find("pairwise leaf distance psi:") != std::string::npos);
    CHECK(pretty.find('4') != std::string::npos);  // max leaf distance

    std::string edges;
    {
        CoutCapture cap;
        REQUIRE(cli::cmd_tree_show(dir.file("tree.txt"), true) == 0);
        edges = cap.text();
    }
    // canonical dump reparses to the same canonical dump
    CHECK(LabelTree::from_text(edges).to_edge_list() == edges);

    write_text(dir.file("bad.txt"), "root cavitation\n");
    CHECK(cli::cmd_tree_show(dir.file("bad.txt"), false) == 1);
    CHECK(cli::cmd_tree_show(dir.file("gone.txt"), false) == 2);
}

TEST_CASE("grad-check command passes in smooth mode") {
    CoutCapture cap;
    CHECK(cli::cmd_grad_check(16, 9) == 0);
    CHECK(cap.text().find("max rel err") != std::string::npos);
}

TEST_CASE("stratified split is balanced and seeded") {
    const LabelTree tree = LabelTree::from_text(kCavitationTree);
    const auto streams = synth_dataset(tree, 10, 256, 30.0, 6);
    std::vector<SignalStream> train_a, test_a, train_b, test_b;
    cli::stratified_split(streams, 3, train_a, test_a);
    cli::stratified_split(streams, 3, train_b, test_b);
    CHECK(train_a.size() == 40);
    CHECK(test_a.size() == 10);
    REQUIRE(train_b.size() == train_a.size());
    for (std::size_t i = 0; i < train_a.size(); ++i) CHECK(train_a[i].leaf_label == train_b[i].leaf_label);
    std::map<NodeId, int> counts;
    for (const auto& s : test_a) counts[s.leaf_label] += 1;
    for (NodeId leaf : tree.leaves()) CHECK(counts[leaf] == 2);  // 20% of 10 per leaf
}
