#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lnl/datagen.hpp"
#include "lnl/robust_train.hpp"

namespace lnl::runner {

// Where the data comes from: a named preset, an explicit spec, or a saved
// CSV (whose sidecar supplies the spec for the clean val/test splits).
struct DatasetConfig {
    std::string preset;  // "waterbirds-like" | "celeba-like" | ""
    data::DatasetSpec explicit_spec;
    bool has_explicit_spec = false;
    std::string csv_path;

    int n_train = 2000;
    int n_val = 1000;
    int n_test = 8000;
    data::NoiseSpec noise;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    train::TrainConfig train_cfg;
    std::vector<std::string> methods;  // erm | dividemix_star | loss_dro | llc_refurbish | ours
    int n_seeds = 1;
    uint64_t seed = 1;
    std::string output_dir;
    bool debug_dump = false;

    std::vector<std::string> warnings;  // filled during parsing
};

// Train split carries noise; val/test are clean draws from the same spec.
struct SplitBundle {
    data::Dataset train;
    data::Dataset val;
    data::Dataset test;
};

ExperimentConfig parse_config_file(const std::string& path);
ExperimentConfig parse_config_json(const std::string& json_text);

// Per-method flag resolution; erm converts the whole budget into warmup.
train::TrainConfig resolve_method(const std::string& method, const train::TrainConfig& base);

SplitBundle make_splits(const DatasetConfig& ds_cfg, uint64_t run_master_seed);

// Ensemble (or single-model) argmax predictions.
std::vector<int> predict(const train::TrainState& st, const Matrix& features);

// Outcome of one (method, seed) training run, read back for aggregation.
struct SeedOutcome {
    std::string method;
    int seed_index = 0;
    int best_epoch = -1;
    std::map<std::string, double> best_metrics;  // eval metrics at the best epoch
    std::map<std::string, double> last_metrics;
    bool failed = false;
    std::string error;
};

// Runs every configured method x seed, writes per-run artifacts plus
// summary.csv / summary.json under output_dir. Returns a process exit code
// (nonzero when any seed failed).
int run(const ExperimentConfig& cfg, bool parallel = false);

// One training run; used by run() and directly by tests.
SeedOutcome run_single(const ExperimentConfig& cfg, const std::string& method, int seed_index,
                       const std::string& run_dir);

// Cross product of parameter overrides (train-config keys), one run() per
// cell, plus a tidy sweep_grid.csv across cells.
int sweep(const ExperimentConfig& cfg, const std::map<std::string, std::vector<double>>& params,
          bool parallel = false);

// Tidy plot-ready CSVs (bars.csv, learning_curves.csv) from a completed run
// directory. Throws without writing anything if the run dir is incomplete.
void emit_plot_data(const std::string& run_dir);

// Dataset generation endpoint: writes the corrupted train CSV + JSON sidecar.
void gen_data(const ExperimentConfig& cfg, const std::string& out_csv);

}  // namespace lnl::runner
