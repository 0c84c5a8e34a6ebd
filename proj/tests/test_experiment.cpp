#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lnl/experiment.hpp"

using namespace lnl;
using namespace lnl::runner;
namespace fs = std::filesystem;

namespace {

std::string tiny_config_json(const std::string& out_dir, const std::string& methods) {
    return R"({
  "dataset": {
    "preset": "waterbirds-like",
    "n_train": 160, "n_val": 80, "n_test": 160,
    "noise": {"kind": "symmetric", "rate": 0.3}
  },
  "train": {"e_warmup": 1, "epochs": 2, "batch_size": 32, "k": 5, "hidden": 8},
  "methods": )" + methods + R"(,
  "n_seeds": 2,
  "seed": 5,
  "output_dir": ")" + out_dir + R"("
})";
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config parsing validates methods and dataset sources") {
    CHECK_THROWS_AS(parse_config_json("{not json"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_json(R"({"train": {}})"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_json(R"({"dataset": {}})"), std::invalid_argument);
    CHECK_THROWS_AS(
        parse_config_json(R"({"dataset": {"preset": "nope"}, "method": "time-travel"})"),
        std::invalid_argument);
    CHECK_THROWS_AS(
        parse_config_json(
            R"({"dataset": {"preset": "waterbirds-like", "n_train": 0}})"),
        std::invalid_argument);

    ExperimentConfig cfg = parse_config_json(
        R"({"dataset": {"preset": "waterbirds-like"}, "methods": ["ablation"]})");
    CHECK(cfg.methods ==
          std::vector<std::string>{"dividemix_star", "loss_dro", "llc_refurbish", "ours"});
}

TEST_CASE("erm configs warn about ignored fields") {
    ExperimentConfig cfg = parse_config_json(R"({
        "dataset": {"preset": "waterbirds-like"},
        "train": {"k": 10, "tau": 60},
        "method": "erm"})");
    bool saw_k = false, saw_tau = false;
    for (const auto& w : cfg.warnings) {
        saw_k = saw_k || w.find("train.k") != std::string::npos;
        saw_tau = saw_tau || w.find("train.tau") != std::string::npos;
    }
    CHECK(saw_k);
    CHECK(saw_tau);
}

TEST_CASE("method flag resolution") {
    train::TrainConfig base;
    base.e_warmup = 5;
    base.epochs = 45;

    train::TrainConfig erm = resolve_method("erm", base);
    CHECK(erm.e_warmup == 50);
    CHECK(erm.epochs == 0);
    CHECK(!erm.co_training);

    train::TrainConfig dm = resolve_method("dividemix_star", base);
    CHECK(!dm.use_llc);
    CHECK(!dm.use_dro);

    train::TrainConfig ours = resolve_method("ours", base);
    CHECK(ours.use_llc);
    CHECK(ours.use_dro);
    CHECK_THROWS_AS(resolve_method("bogus", base), std::invalid_argument);
}

TEST_CASE("splits share the train spec but draw fresh clean data") {
    ExperimentConfig cfg = parse_config_json(tiny_config_json("/tmp/unused", R"(["ours"])"));
    SplitBundle s1 = make_splits(cfg.dataset, 99);
    SplitBundle s2 = make_splits(cfg.dataset, 99);
    CHECK(s1.train.features.data == s2.train.features.data);
    CHECK(s1.train.noisy_labels == s2.train.noisy_labels);

    CHECK(s1.train.n() == 160);
    CHECK(s1.val.n() == 80);
    CHECK(s1.test.n() == 160);
    // val and test are clean
    for (int i = 0; i < s1.val.n(); ++i) CHECK(s1.val.corrupted[i] == 0);
    for (int i = 0; i < s1.test.n(); ++i) CHECK(s1.test.noisy_labels[i] == s1.test.true_labels[i]);

    SplitBundle other = make_splits(cfg.dataset, 100);
    CHECK(other.train.features.data != s1.train.features.data);
}

TEST_CASE("run writes one directory per method x seed plus the summary") {
    TempDir tmp("lnl_test_run");
    ExperimentConfig cfg = parse_config_json(
        tiny_config_json(tmp.path.string(), R"(["ours", "erm"])"));
    int rc = run(cfg);
    CHECK(rc == 0);

    int run_dirs = 0;
    for (const auto& method : {"ours", "erm"}) {
        for (int s = 0; s < 2; ++s) {
            fs::path dir = tmp.path / method / ("seed_" + std::to_string(s));
            CHECK(fs::exists(dir / "report.json"));
            CHECK(fs::exists(dir / "report.csv"));
            CHECK(fs::exists(dir / "checkpoint_last_a.json"));
            CHECK(fs::exists(dir / "checkpoint_best_a.json"));
            CHECK(fs::exists(dir / "confusion_best.csv"));
            ++run_dirs;
        }
    }
    CHECK(run_dirs == 4);
    CHECK(fs::exists(tmp.path / "summary.csv"));
    CHECK(fs::exists(tmp.path / "summary.json"));
    CHECK(fs::exists(tmp.path / "config.json"));
    // erm runs single-model: no second checkpoint
    CHECK(!fs::exists(tmp.path / "erm" / "seed_0" / "checkpoint_last_b.json"));
    CHECK(fs::exists(tmp.path / "ours" / "seed_0" / "checkpoint_last_b.json"));
}

TEST_CASE("re-running the same config is byte-identical") {
    TempDir tmp1("lnl_test_det1");
    TempDir tmp2("lnl_test_det2");
    ExperimentConfig cfg1 = parse_config_json(tiny_config_json(tmp1.path.string(), R"(["ours"])"));
    ExperimentConfig cfg2 = parse_config_json(tiny_config_json(tmp2.path.string(), R"(["ours"])"));
    CHECK(run(cfg1) == 0);
    CHECK(run(cfg2) == 0);

    CHECK(slurp(tmp1.path / "summary.csv") == slurp(tmp2.path / "summary.csv"));
    CHECK(slurp(tmp1.path / "ours/seed_0/report.json") ==
          slurp(tmp2.path / "ours/seed_0/report.json"));
    CHECK(slurp(tmp1.path / "ours/seed_1/report.csv") ==
          slurp(tmp2.path / "ours/seed_1/report.csv"));
    CHECK(slurp(tmp1.path / "ours/seed_0/checkpoint_last_a.json") ==
          slurp(tmp2.path / "ours/seed_0/checkpoint_last_a.json"));
}

TEST_CASE("parallel seed execution produces the sequential bytes") {
    TempDir tmp1("lnl_test_par1");
    TempDir tmp2("lnl_test_par2");
    ExperimentConfig cfg1 = parse_config_json(tiny_config_json(tmp1.path.string(), R"(["ours"])"));
    ExperimentConfig cfg2 = parse_config_json(tiny_config_json(tmp2.path.string(), R"(["ours"])"));
    CHECK(run(cfg1, false) == 0);
    CHECK(run(cfg2, true) == 0);
    CHECK(slurp(tmp1.path / "summary.csv") == slurp(tmp2.path / "summary.csv"));
    CHECK(slurp(tmp1.path / "ours/seed_1/report.json") ==
          slurp(tmp2.path / "ours/seed_1/report.json"));
}

TEST_CASE("emit-plots produces tidy CSVs and refuses incomplete dirs") {
    TempDir tmp("lnl_test_plots");
    ExperimentConfig cfg = parse_config_json(
        tiny_config_json(tmp.path.string(), R"(["ours", "erm"])"));
    REQUIRE(run(cfg) == 0);

    emit_plot_data(tmp.path.string());
    std::string bars = slurp(tmp.path / "plots/bars.csv");
    CHECK(bars.rfind("method,group,metric,value\n", 0) == 0);
    CHECK(bars.find("ours,g1,test_acc,") != std::string::npos);
    CHECK(bars.find("erm,all,test_avg_acc,") != std::string::npos);
    CHECK(bars.find("ours,all,noise_auc,") != std::string::npos);
    std::string curves = slurp(tmp.path / "plots/learning_curves.csv");
    CHECK(curves.rfind("method,seed,epoch,metric,value\n", 0) == 0);
    CHECK(curves.find("ours,1,2,test_worst_acc,") != std::string::npos);

    // re-emission overwrites deterministically
    emit_plot_data(tmp.path.string());
    CHECK(slurp(tmp.path / "plots/bars.csv") == bars);

    TempDir empty("lnl_test_plots_empty");
    CHECK_THROWS_AS(emit_plot_data(empty.path.string()), std::runtime_error);
    CHECK(!fs::exists(empty.path / "plots"));
}

TEST_CASE("debug dump writes per-epoch confidence CSVs") {
    TempDir tmp("lnl_test_dump");
    ExperimentConfig cfg = parse_config_json(tiny_config_json(tmp.path.string(), R"(["ours"])"));
    cfg.n_seeds = 1;
    cfg.debug_dump = true;
    REQUIRE(run(cfg) == 0);
    // warmup epoch 0 has no confidence yet; robust epochs 1..2 dump
    fs::path dir = tmp.path / "ours" / "seed_0";
    CHECK(!fs::exists(dir / "confidence_epoch_000.csv"));
    CHECK(fs::exists(dir / "confidence_epoch_001.csv"));
    CHECK(fs::exists(dir / "confidence_epoch_002.csv"));
    std::string dump = slurp(dir / "confidence_epoch_001.csv");
    CHECK(dump.rfind("sample_id,llc_score,w,corrupted\n", 0) == 0);
    // one row per training sample plus the header
    CHECK(std::count(dump.begin(), dump.end(), '\n') == 161);
}

TEST_CASE("sweep runs the parameter grid and emits the grid csv") {
    TempDir tmp("lnl_test_sweep");
    ExperimentConfig cfg = parse_config_json(tiny_config_json(tmp.path.string(), R"(["ours"])"));
    cfg.n_seeds = 1;
    std::map<std::string, std::vector<double>> params = {{"k", {3, 5}}, {"tau", {50, 100}}};
    CHECK(sweep(cfg, params) == 0);
    for (const char* cell : {"cell_k3_tau50", "cell_k3_tau100", "cell_k5_tau50", "cell_k5_tau100"}) {
        CHECK(fs::exists(tmp.path / cell / "summary.csv"));
    }
    std::string grid = slurp(tmp.path / "sweep_grid.csv");
    CHECK(grid.rfind("k,tau,method,best_worst_mean", 0) == 0);
    CHECK(std::count(grid.begin(), grid.end(), '\n') == 5);  // header + 4 cells x 1 method
    CHECK(grid.find("5,100,ours,") != std::string::npos);
}

TEST_CASE("gen-data round trips through the csv dataset source") {
    TempDir tmp("lnl_test_gendata");
    ExperimentConfig cfg = parse_config_json(tiny_config_json(tmp.path.string(), R"(["ours"])"));
    const std::string csv = (tmp.path / "data.csv").string();
    gen_data(cfg, csv);
    CHECK(fs::exists(csv));
    CHECK(fs::exists(tmp.path / "data.json"));

    data::Dataset ds = data::load_csv(csv);
    CHECK(ds.n() == 160);
    int flips = 0;
    for (int i = 0; i < ds.n(); ++i) flips += ds.corrupted[i];
    CHECK(flips == 48);  // round(0.3 * 160)

    // gen-data matches what run builds for seed 0
    SplitBundle splits = make_splits(cfg.dataset, derive_seed(cfg.seed, "run0"));
    CHECK(splits.train.features.data == ds.features.data);
    CHECK(splits.train.noisy_labels == ds.noisy_labels);

    // the csv + sidecar can back an experiment config
    ExperimentConfig csv_cfg = parse_config_json(R"({
        "dataset": {"csv": ")" + csv + R"(", "n_val": 40, "n_test": 80},
        "train": {"e_warmup": 1, "epochs": 1, "batch_size": 32, "k": 5, "hidden": 8},
        "method": "ours", "seed": 3,
        "output_dir": ")" + (tmp.path / "from_csv").string() + R"("})");
    SplitBundle from_csv = make_splits(csv_cfg.dataset, 1);
    CHECK(from_csv.train.noisy_labels == ds.noisy_labels);
    CHECK(from_csv.val.n() == 40);
    CHECK(from_csv.test.n() == 80);
}
