// Experiment runner for the noisy-label / imbalanced-subpopulation lab.
//
//   lnl_lab run --config cfg.json [--seeds N] [--out DIR] [--parallel]
//   lnl_lab sweep --config cfg.json --param k=5,10,20 --param tau=50,70,90
//   lnl_lab emit-plots RUN_DIR
//   lnl_lab gen-data --config cfg.json --out data.csv
//
// Set LNL_LOG=quiet|info|debug to control verbosity.

#include <cstdio>
#include <exception>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lnl/experiment.hpp"
#include "lnl/log.hpp"

namespace {

std::map<std::string, std::vector<double>> parse_param_args(const std::vector<std::string>& args) {
    std::map<std::string, std::vector<double>> params;
    for (const auto& arg : args) {
        size_t eq = arg.find('=');
        if (eq == std::string::npos || eq == 0)
            throw std::invalid_argument("--param expects name=v1,v2,...: " + arg);
        std::string name = arg.substr(0, eq);
        std::vector<double> values;
        size_t start = eq + 1;
        while (start <= arg.size()) {
            size_t comma = arg.find(',', start);
            std::string tok = arg.substr(start, comma == std::string::npos ? std::string::npos
                                                                           : comma - start);
            if (tok.empty()) throw std::invalid_argument("--param has an empty value: " + arg);
            values.push_back(std::stod(tok));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (values.empty()) throw std::invalid_argument("--param has no values: " + arg);
        params[name] = std::move(values);
    }
    return params;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"noisy-label learning over imbalanced subpopulations: experiment runner"};
    app.require_subcommand(1);

    std::string config_path, out_path, run_dir;
    int seeds_override = 0;
    bool parallel = false;
    std::vector<std::string> param_args;

    CLI::App* cmd_run = app.add_subcommand("run", "train configured methods over seeds");
    cmd_run->add_option("--config", config_path, "experiment config JSON")->required();
    cmd_run->add_option("--seeds", seeds_override, "override n_seeds");
    cmd_run->add_option("--out", out_path, "override output_dir");
    cmd_run->add_flag("--parallel", parallel, "run seeds in parallel");

    CLI::App* cmd_sweep = app.add_subcommand("sweep", "hyperparameter grid of runs");
    cmd_sweep->add_option("--config", config_path, "experiment config JSON")->required();
    cmd_sweep->add_option("--param", param_args, "grid axis, e.g. k=5,10,20")->required();
    cmd_sweep->add_option("--out", out_path, "override output_dir");
    cmd_sweep->add_flag("--parallel", parallel, "run seeds in parallel");

    CLI::App* cmd_plots = app.add_subcommand("emit-plots", "tidy plot CSVs from a finished run");
    cmd_plots->add_option("run_dir", run_dir, "completed run directory")->required();

    CLI::App* cmd_gen = app.add_subcommand("gen-data", "write the corrupted train CSV + sidecar");
    cmd_gen->add_option("--config", config_path, "experiment config JSON")->required();
    cmd_gen->add_option("--out", out_path, "output CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_run->parsed()) {
            lnl::runner::ExperimentConfig cfg = lnl::runner::parse_config_file(config_path);
            if (seeds_override > 0) cfg.n_seeds = seeds_override;
            if (!out_path.empty()) cfg.output_dir = out_path;
            return lnl::runner::run(cfg, parallel);
        }
        if (cmd_sweep->parsed()) {
            lnl::runner::ExperimentConfig cfg = lnl::runner::parse_config_file(config_path);
            if (!out_path.empty()) cfg.output_dir = out_path;
            return lnl::runner::sweep(cfg, parse_param_args(param_args), parallel);
        }
        if (cmd_plots->parsed()) {
            lnl::runner::emit_plot_data(run_dir);
            return 0;
        }
        if (cmd_gen->parsed()) {
            lnl::runner::ExperimentConfig cfg = lnl::runner::parse_config_file(config_path);
            lnl::runner::gen_data(cfg, out_path);
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
