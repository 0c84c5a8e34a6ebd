#include "lnl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "lnl/log.hpp"
#include "lnl/metrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace lnl::runner {

namespace {

const std::vector<std::string> kMethodNames = {"erm", "dividemix_star", "loss_dro",
                                               "llc_refurbish", "ours"};

std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string sidecar_path(const std::string& csv_path) {
    if (csv_path.size() > 4 && csv_path.substr(csv_path.size() - 4) == ".csv")
        return csv_path.substr(0, csv_path.size() - 4) + ".json";
    return csv_path + ".json";
}

data::DatasetSpec scale_spec(const data::DatasetSpec& base, int n_target, uint64_t seed) {
    data::DatasetSpec out = base;
    out.seed = seed;
    const double total = static_cast<double>(base.total_samples());
    int assigned = 0;
    for (auto& sp : out.subpops) {
        sp.n_samples = std::max(1, static_cast<int>(std::llround(sp.n_samples / total * n_target)));
        assigned += sp.n_samples;
    }
    // absorb rounding drift in the largest subpopulation
    auto largest = std::max_element(out.subpops.begin(), out.subpops.end(),
                                    [](const auto& a, const auto& b) { return a.n_samples < b.n_samples; });
    largest->n_samples += n_target - assigned;
    return out;
}

data::DatasetSpec resolve_train_spec(const DatasetConfig& ds, uint64_t data_seed) {
    if (ds.has_explicit_spec) {
        data::DatasetSpec spec = ds.explicit_spec;
        spec.seed = data_seed;
        return spec;
    }
    if (ds.preset == "waterbirds-like") return data::waterbirds_like_spec(ds.n_train, data_seed);
    if (ds.preset == "celeba-like") return data::celeba_like_spec(ds.n_train, data_seed);
    throw std::invalid_argument("unknown dataset preset: '" + ds.preset + "'");
}

void check_noise_json(const json& nj, data::NoiseSpec& noise, std::vector<std::string>& warnings) {
    for (const auto& [key, val] : nj.items()) {
        if (key != "kind" && key != "rate" && key != "include_self" && key != "transition")
            warnings.push_back("unknown key dataset.noise." + key);
    }
    std::string kind = nj.value("kind", "symmetric");
    if (kind == "symmetric")
        noise.kind = data::NoiseKind::symmetric;
    else if (kind == "asymmetric")
        noise.kind = data::NoiseKind::asymmetric;
    else
        throw std::invalid_argument("dataset.noise.kind must be symmetric|asymmetric");
    noise.rate = nj.value("rate", 0.0);
    noise.include_self = nj.value("include_self", false);
    if (nj.contains("transition"))
        noise.transition = nj.at("transition").get<std::vector<std::vector<double>>>();
}

}  // namespace

ExperimentConfig parse_config_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
    }

    ExperimentConfig cfg;
    for (const auto& [key, val] : j.items()) {
        static const std::set<std::string> known = {"dataset", "train",   "method",     "methods",
                                                    "n_seeds", "seed", "output_dir", "debug_dump"};
        if (!known.count(key)) cfg.warnings.push_back("unknown key " + key);
    }

    if (!j.contains("dataset")) throw std::invalid_argument("config missing 'dataset'");
    const json& dj = j.at("dataset");
    for (const auto& [key, val] : dj.items()) {
        static const std::set<std::string> known = {"preset", "spec",   "csv", "n_train",
                                                    "n_val",  "n_test", "noise"};
        if (!known.count(key)) cfg.warnings.push_back("unknown key dataset." + key);
    }
    cfg.dataset.preset = dj.value("preset", "");
    cfg.dataset.csv_path = dj.value("csv", "");
    if (dj.contains("spec")) {
        // explicit spec uses the same schema as the sidecar
        const json& sj = dj.at("spec");
        data::DatasetSpec spec;
        spec.d_core = sj.at("d_core").get<int>();
        spec.d_spur = sj.at("d_spur").get<int>();
        spec.seed = sj.value("seed", 0);
        for (const auto& e : sj.at("subpops")) {
            data::SubpopSpec sp;
            sp.class_id = e.at("class_id").get<int>();
            sp.group_id = e.at("group_id").get<int>();
            sp.n_samples = e.at("n_samples").get<int>();
            sp.core_mean = e.at("core_mean").get<std::vector<double>>();
            sp.spurious_mean = e.at("spurious_mean").get<std::vector<double>>();
            sp.stddev = e.at("stddev").get<double>();
            spec.subpops.push_back(std::move(sp));
        }
        spec.validate();
        cfg.dataset.explicit_spec = std::move(spec);
        cfg.dataset.has_explicit_spec = true;
    }
    int source_count = (!cfg.dataset.preset.empty() ? 1 : 0) + (cfg.dataset.has_explicit_spec ? 1 : 0) +
                       (!cfg.dataset.csv_path.empty() ? 1 : 0);
    if (source_count != 1)
        throw std::invalid_argument("dataset needs exactly one of preset | spec | csv");

    cfg.dataset.n_train = dj.value("n_train", 2000);
    if (cfg.dataset.has_explicit_spec) cfg.dataset.n_train = cfg.dataset.explicit_spec.total_samples();
    cfg.dataset.n_val = dj.value("n_val", std::max(2, cfg.dataset.n_train / 2));
    cfg.dataset.n_test = dj.value("n_test", 2 * cfg.dataset.n_train);
    if (cfg.dataset.n_train < 1 || cfg.dataset.n_val < 1 || cfg.dataset.n_test < 1)
        throw std::invalid_argument("dataset sizes must be >= 1");
    if (dj.contains("noise")) check_noise_json(dj.at("noise"), cfg.dataset.noise, cfg.warnings);

    std::set<std::string> train_keys_present;
    if (j.contains("train")) {
        const json& tj = j.at("train");
        static const std::set<std::string> known = {
            "e_warmup", "epochs",  "batch_size", "k",      "tau",        "lr",
            "momentum", "sigma_w", "sigma_s",    "p_drop", "hidden",     "co_training",
            "raw_llc_counts"};
        for (const auto& [key, val] : tj.items()) {
            if (!known.count(key)) {
                cfg.warnings.push_back("unknown key train." + key);
                continue;
            }
            train_keys_present.insert(key);
        }
        train::TrainConfig& tc = cfg.train_cfg;
        tc.e_warmup = tj.value("e_warmup", tc.e_warmup);
        tc.epochs = tj.value("epochs", tc.epochs);
        tc.batch_size = tj.value("batch_size", tc.batch_size);
        tc.k = tj.value("k", tc.k);
        tc.tau = tj.value("tau", tc.tau);
        tc.lr = tj.value("lr", tc.lr);
        tc.momentum = tj.value("momentum", tc.momentum);
        tc.sigma_w = tj.value("sigma_w", tc.sigma_w);
        tc.sigma_s = tj.value("sigma_s", tc.sigma_s);
        tc.p_drop = tj.value("p_drop", tc.p_drop);
        tc.hidden = tj.value("hidden", tc.hidden);
        tc.co_training = tj.value("co_training", tc.co_training);
        tc.raw_llc_counts = tj.value("raw_llc_counts", tc.raw_llc_counts);
        tc.validate();
    }

    if (j.contains("methods")) {
        cfg.methods = j.at("methods").get<std::vector<std::string>>();
    } else if (j.contains("method")) {
        cfg.methods = {j.at("method").get<std::string>()};
    } else {
        cfg.methods = {"ours"};
    }
    // "ablation" expands to the 2x2 confidence x selection grid
    std::vector<std::string> expanded;
    for (const auto& m : cfg.methods) {
        if (m == "ablation") {
            expanded.insert(expanded.end(),
                            {"dividemix_star", "loss_dro", "llc_refurbish", "ours"});
        } else {
            expanded.push_back(m);
        }
    }
    cfg.methods = std::move(expanded);
    for (const auto& m : cfg.methods) {
        if (std::find(kMethodNames.begin(), kMethodNames.end(), m) == kMethodNames.end())
            throw std::invalid_argument("unknown method: '" + m + "'");
    }

    if (std::find(cfg.methods.begin(), cfg.methods.end(), "erm") != cfg.methods.end()) {
        for (const char* key : {"k", "tau", "sigma_s", "p_drop"}) {
            if (train_keys_present.count(key))
                cfg.warnings.push_back(std::string("method 'erm' ignores train.") + key);
        }
    }

    cfg.n_seeds = j.value("n_seeds", 1);
    if (cfg.n_seeds < 1) throw std::invalid_argument("n_seeds must be >= 1");
    cfg.seed = j.value("seed", 1);
    cfg.output_dir = j.value("output_dir", "");
    cfg.debug_dump = j.value("debug_dump", false);

    for (const auto& w : cfg.warnings) log::warn(w);
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_json(ss.str());
}

train::TrainConfig resolve_method(const std::string& method, const train::TrainConfig& base) {
    train::TrainConfig tc = base;
    if (method == "erm") {
        tc.e_warmup = base.e_warmup + base.epochs;  // plain ERM for the whole budget
        tc.epochs = 0;
        tc.co_training = false;
    } else if (method == "dividemix_star") {
        tc.use_llc = false;
        tc.use_dro = false;
    } else if (method == "loss_dro") {
        tc.use_llc = false;
        tc.use_dro = true;
    } else if (method == "llc_refurbish") {
        tc.use_llc = true;
        tc.use_dro = false;
    } else if (method == "ours") {
        tc.use_llc = true;
        tc.use_dro = true;
    } else {
        throw std::invalid_argument("unknown method: '" + method + "'");
    }
    return tc;
}

SplitBundle make_splits(const DatasetConfig& ds_cfg, uint64_t run_master_seed) {
    SplitBundle bundle;
    data::DatasetSpec train_spec;

    if (!ds_cfg.csv_path.empty()) {
        bundle.train = data::load_csv(ds_cfg.csv_path);
        data::NoiseSpec sidecar_noise;
        bool has_noise = false;
        data::load_sidecar(sidecar_path(ds_cfg.csv_path), train_spec, sidecar_noise, has_noise);
    } else {
        train_spec = resolve_train_spec(ds_cfg, derive_seed(run_master_seed, "data_train"));
        Rng gen_rng(train_spec.seed);
        data::Dataset clean = data::generate(train_spec, gen_rng);
        Rng noise_rng(derive_seed(run_master_seed, "noise"));
        bundle.train = data::inject_noise(clean, ds_cfg.noise, noise_rng);
    }

    data::DatasetSpec val_spec =
        scale_spec(train_spec, ds_cfg.n_val, derive_seed(run_master_seed, "data_val"));
    Rng val_rng(val_spec.seed);
    bundle.val = data::generate(val_spec, val_rng);

    data::DatasetSpec test_spec =
        scale_spec(train_spec, ds_cfg.n_test, derive_seed(run_master_seed, "data_test"));
    Rng test_rng(test_spec.seed);
    bundle.test = data::generate(test_spec, test_rng);
    return bundle;
}

std::vector<int> predict(const train::TrainState& st, const Matrix& features) {
    std::vector<int> preds(features.rows);
    for (int i = 0; i < features.rows; ++i) {
        std::vector<double> probs = nn::forward(st.params_a, features.row(i)).probs;
        if (st.has_b) {
            std::vector<double> pb = nn::forward(st.params_b, features.row(i)).probs;
            for (size_t c = 0; c < probs.size(); ++c) probs[c] = 0.5 * (probs[c] + pb[c]);
        }
        int best = 0;
        for (size_t c = 1; c < probs.size(); ++c) {
            if (probs[c] > probs[best]) best = static_cast<int>(c);
        }
        preds[i] = best;
    }
    return preds;
}

namespace {

void add_group_report(std::map<std::string, double>& m, const std::string& prefix,
                      const metrics::GroupReport& rep) {
    m[prefix + "_avg_acc"] = rep.avg_accuracy;
    m[prefix + "_worst_acc"] = rep.worst_group_accuracy;
    for (const auto& [g, acc] : rep.per_group_accuracy)
        m[prefix + "_acc_g" + std::to_string(g)] = acc;
}

std::string epoch_dump_name(int epoch) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "confidence_epoch_%03d.csv", epoch);
    return buf;
}

}  // namespace

SeedOutcome run_single(const ExperimentConfig& cfg, const std::string& method, int seed_index,
                       const std::string& run_dir) {
    SeedOutcome outcome;
    outcome.method = method;
    outcome.seed_index = seed_index;

    const uint64_t master = derive_seed(cfg.seed, "run" + std::to_string(seed_index));
    SplitBundle splits = make_splits(cfg.dataset, master);

    train::TrainConfig tc = resolve_method(method, cfg.train_cfg);
    tc.seed = derive_seed(master, "train");

    data::TrainView view = data::training_view(splits.train);
    fs::create_directories(run_dir);

    train::EpochEval hook = [&](const train::TrainState& st,
                                const std::vector<double>& w_report) {
        std::map<std::string, double> m;
        add_group_report(m, "test",
                         metrics::group_report(predict(st, splits.test.features),
                                               splits.test.true_labels, splits.test.group_ids));
        metrics::GroupReport val_rep =
            metrics::group_report(predict(st, splits.val.features), splits.val.true_labels,
                                  splits.val.group_ids);
        add_group_report(m, "val", val_rep);
        m["val_metric"] = val_rep.worst_group_accuracy;

        if (!w_report.empty()) {
            metrics::NoiseIdReport nid =
                metrics::noise_id_report(w_report, splits.train.corrupted, splits.train.group_ids);
            if (nid.auc_overall) m["noise_auc_overall"] = *nid.auc_overall;
            for (const auto& [g, auc] : nid.auc_per_group) {
                if (auc) m["noise_auc_g" + std::to_string(g)] = *auc;
            }
            double sum_clean = 0.0, sum_noisy = 0.0;
            long long n_clean = 0, n_noisy = 0;
            for (size_t i = 0; i < w_report.size(); ++i) {
                if (splits.train.corrupted[i]) {
                    sum_noisy += w_report[i];
                    ++n_noisy;
                } else {
                    sum_clean += w_report[i];
                    ++n_clean;
                }
            }
            if (n_clean) m["mean_w_clean"] = sum_clean / static_cast<double>(n_clean);
            if (n_noisy) m["mean_w_noisy"] = sum_noisy / static_cast<double>(n_noisy);

            if (cfg.debug_dump) {
                std::string dump = "sample_id,llc_score,w,corrupted\n";
                const auto& scores = st.confidence_a.scores;
                for (size_t i = 0; i < w_report.size(); ++i) {
                    dump += std::to_string(i) + ",";
                    dump += format_double(i < scores.size() ? scores[i] : 0.0);
                    dump += ",";
                    dump += format_double(w_report[i]);
                    dump += ",";
                    dump += std::to_string(int(splits.train.corrupted[i]));
                    dump += "\n";
                }
                std::ofstream f(run_dir + "/" + epoch_dump_name(st.epoch), std::ios::binary);
                f << dump;
            }
        }
        return m;
    };

    train::TrainResult res = train::train(view, tc, &hook);

    train::save_report_json(res.report, run_dir + "/report.json");
    train::save_report_csv(res.report, run_dir + "/report.csv");
    metrics::save_confusion_csv(
        metrics::confusion_matrix(predict(res.best, splits.test.features), splits.test.true_labels,
                                  splits.test.num_classes),
        run_dir + "/confusion_best.csv");
    nn::save_checkpoint(res.last.params_a, run_dir + "/checkpoint_last_a.json");
    nn::save_checkpoint(res.best.params_a, run_dir + "/checkpoint_best_a.json");
    if (res.last.has_b) {
        nn::save_checkpoint(res.last.params_b, run_dir + "/checkpoint_last_b.json");
        nn::save_checkpoint(res.best.params_b, run_dir + "/checkpoint_best_b.json");
    }

    outcome.best_epoch = res.report.best_epoch;
    outcome.best_metrics = res.report.epochs.at(res.report.best_epoch).metrics;
    outcome.last_metrics = res.report.epochs.back().metrics;
    return outcome;
}

namespace {

struct Aggregate {
    double mean = 0.0;
    double stddev = 0.0;
    int count = 0;
};

Aggregate aggregate_metric(const std::vector<SeedOutcome>& outcomes, bool best,
                           const std::string& key) {
    std::vector<double> vals;
    for (const auto& o : outcomes) {
        const auto& m = best ? o.best_metrics : o.last_metrics;
        auto it = m.find(key);
        if (it != m.end()) vals.push_back(it->second);
    }
    Aggregate a;
    a.count = static_cast<int>(vals.size());
    if (vals.empty()) return a;
    for (double v : vals) a.mean += v;
    a.mean /= static_cast<double>(vals.size());
    if (vals.size() > 1) {
        double ss = 0.0;
        for (double v : vals) ss += (v - a.mean) * (v - a.mean);
        a.stddev = std::sqrt(ss / static_cast<double>(vals.size() - 1));
    }
    return a;
}

json config_to_json(const ExperimentConfig& cfg) {
    json j;
    json dj;
    if (!cfg.dataset.preset.empty()) dj["preset"] = cfg.dataset.preset;
    if (!cfg.dataset.csv_path.empty()) dj["csv"] = cfg.dataset.csv_path;
    if (cfg.dataset.has_explicit_spec) {
        const auto& spec = cfg.dataset.explicit_spec;
        json sj;
        sj["d_core"] = spec.d_core;
        sj["d_spur"] = spec.d_spur;
        sj["seed"] = spec.seed;
        sj["subpops"] = json::array();
        for (const auto& sp : spec.subpops) {
            sj["subpops"].push_back({{"class_id", sp.class_id},
                                     {"group_id", sp.group_id},
                                     {"n_samples", sp.n_samples},
                                     {"core_mean", sp.core_mean},
                                     {"spurious_mean", sp.spurious_mean},
                                     {"stddev", sp.stddev}});
        }
        dj["spec"] = sj;
    }
    dj["n_train"] = cfg.dataset.n_train;
    dj["n_val"] = cfg.dataset.n_val;
    dj["n_test"] = cfg.dataset.n_test;
    dj["noise"] = {{"kind", cfg.dataset.noise.kind == data::NoiseKind::symmetric ? "symmetric"
                                                                                 : "asymmetric"},
                   {"rate", cfg.dataset.noise.rate},
                   {"include_self", cfg.dataset.noise.include_self}};
    if (!cfg.dataset.noise.transition.empty()) dj["noise"]["transition"] = cfg.dataset.noise.transition;
    j["dataset"] = dj;

    const auto& tc = cfg.train_cfg;
    j["train"] = {{"e_warmup", tc.e_warmup}, {"epochs", tc.epochs},
                  {"batch_size", tc.batch_size}, {"k", tc.k},
                  {"tau", tc.tau}, {"lr", tc.lr},
                  {"momentum", tc.momentum}, {"sigma_w", tc.sigma_w},
                  {"sigma_s", tc.sigma_s}, {"p_drop", tc.p_drop},
                  {"hidden", tc.hidden}, {"co_training", tc.co_training},
                  {"raw_llc_counts", tc.raw_llc_counts}};
    j["methods"] = cfg.methods;
    j["n_seeds"] = cfg.n_seeds;
    j["seed"] = cfg.seed;
    j["output_dir"] = cfg.output_dir;
    j["debug_dump"] = cfg.debug_dump;
    return j;
}

}  // namespace

int run(const ExperimentConfig& cfg, bool parallel) {
    if (cfg.output_dir.empty()) throw std::invalid_argument("run: output_dir is required");
    fs::create_directories(cfg.output_dir);
    {
        std::ofstream f(cfg.output_dir + "/config.json", std::ios::binary);
        f << config_to_json(cfg).dump(2) << "\n";
    }

    struct Job {
        std::string method;
        int seed_index;
        std::string run_dir;
    };
    std::vector<Job> jobs;
    for (const auto& method : cfg.methods) {
        for (int s = 0; s < cfg.n_seeds; ++s) {
            jobs.push_back({method, s, cfg.output_dir + "/" + method + "/seed_" + std::to_string(s)});
        }
    }

    std::vector<SeedOutcome> outcomes(jobs.size());
    auto work = [&](size_t idx) {
        const Job& job = jobs[idx];
        try {
            log::info("run " + job.method + " seed " + std::to_string(job.seed_index));
            outcomes[idx] = run_single(cfg, job.method, job.seed_index, job.run_dir);
        } catch (const std::exception& e) {
            outcomes[idx].method = job.method;
            outcomes[idx].seed_index = job.seed_index;
            outcomes[idx].failed = true;
            outcomes[idx].error = e.what();
            log::warn("run " + job.method + " seed " + std::to_string(job.seed_index) +
                      " failed: " + e.what());
        }
    };

    if (parallel && jobs.size() > 1) {
        std::atomic<size_t> next{0};
        const unsigned n_threads =
            std::min<unsigned>(std::thread::hardware_concurrency(), jobs.size());
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < std::max(1u, n_threads); ++t) {
            pool.emplace_back([&] {
                while (true) {
                    size_t idx = next.fetch_add(1);
                    if (idx >= jobs.size()) break;
                    work(idx);
                }
            });
        }
        for (auto& th : pool) th.join();
    } else {
        for (size_t i = 0; i < jobs.size(); ++i) work(i);
    }

    // Aggregate per method, preserving config order.
    static const std::vector<std::pair<std::string, std::string>> kSummaryCols = {
        {"best_avg", "test_avg_acc"}, {"best_worst", "test_worst_acc"}};
    static const std::vector<std::pair<std::string, std::string>> kSummaryColsLast = {
        {"last_avg", "test_avg_acc"}, {"last_worst", "test_worst_acc"},
        {"last_noise_auc", "noise_auc_overall"}};

    std::string csv = "method,n_seeds";
    for (const auto& [name, key] : kSummaryCols) csv += "," + name + "_mean," + name + "_std";
    for (const auto& [name, key] : kSummaryColsLast) csv += "," + name + "_mean," + name + "_std";
    csv += "\n";

    json summary;
    summary["warnings"] = cfg.warnings;
    summary["methods"] = json::array();
    bool any_failed = false;

    for (const auto& method : cfg.methods) {
        std::vector<SeedOutcome> per_method;
        for (const auto& o : outcomes) {
            if (o.method == method) {
                per_method.push_back(o);
                any_failed = any_failed || o.failed;
            }
        }
        csv += method + "," + std::to_string(per_method.size());
        json mj;
        mj["method"] = method;
        mj["per_seed"] = json::array();
        for (const auto& o : per_method) {
            json oj;
            oj["seed"] = o.seed_index;
            oj["failed"] = o.failed;
            if (o.failed) {
                oj["error"] = o.error;
            } else {
                oj["best_epoch"] = o.best_epoch;
                oj["best"] = o.best_metrics;
                oj["last"] = o.last_metrics;
            }
            mj["per_seed"].push_back(std::move(oj));
        }
        auto emit = [&](const std::string& name, const std::string& key, bool best) {
            Aggregate a = aggregate_metric(per_method, best, key);
            if (a.count > 0) {
                csv += "," + format_double(a.mean) + "," + format_double(a.stddev);
                mj[name + "_mean"] = a.mean;
                mj[name + "_std"] = a.stddev;
            } else {
                csv += ",,";
            }
        };
        for (const auto& [name, key] : kSummaryCols) emit(name, key, true);
        for (const auto& [name, key] : kSummaryColsLast) emit(name, key, false);
        csv += "\n";
        summary["methods"].push_back(std::move(mj));
    }

    {
        std::ofstream f(cfg.output_dir + "/summary.csv", std::ios::binary);
        f << csv;
    }
    {
        std::ofstream f(cfg.output_dir + "/summary.json", std::ios::binary);
        f << summary.dump(2) << "\n";
    }
    return any_failed ? 1 : 0;
}

int sweep(const ExperimentConfig& cfg, const std::map<std::string, std::vector<double>>& params,
          bool parallel) {
    if (cfg.output_dir.empty()) throw std::invalid_argument("sweep: output_dir is required");
    if (params.empty()) throw std::invalid_argument("sweep: no parameters given");

    auto set_param = [](train::TrainConfig& tc, const std::string& name, double value) {
        if (name == "k") tc.k = static_cast<int>(std::llround(value));
        else if (name == "tau") tc.tau = value;
        else if (name == "lr") tc.lr = value;
        else if (name == "momentum") tc.momentum = value;
        else if (name == "sigma_w") tc.sigma_w = value;
        else if (name == "sigma_s") tc.sigma_s = value;
        else if (name == "p_drop") tc.p_drop = value;
        else if (name == "batch_size") tc.batch_size = static_cast<int>(std::llround(value));
        else if (name == "hidden") tc.hidden = static_cast<int>(std::llround(value));
        else if (name == "e_warmup") tc.e_warmup = static_cast<int>(std::llround(value));
        else if (name == "epochs") tc.epochs = static_cast<int>(std::llround(value));
        else throw std::invalid_argument("sweep: unknown parameter '" + name + "'");
    };

    // Cross product in deterministic (sorted-key) order.
    std::vector<std::string> names;
    for (const auto& [name, vals] : params) {
        if (vals.empty()) throw std::invalid_argument("sweep: empty value list for " + name);
        names.push_back(name);
    }
    std::vector<std::map<std::string, double>> cells = {{}};
    for (const auto& name : names) {
        std::vector<std::map<std::string, double>> next;
        for (const auto& cell : cells) {
            for (double v : params.at(name)) {
                auto c = cell;
                c[name] = v;
                next.push_back(std::move(c));
            }
        }
        cells = std::move(next);
    }

    fs::create_directories(cfg.output_dir);
    std::string grid_csv;
    for (const auto& name : names) grid_csv += name + ",";
    grid_csv += "method,best_worst_mean,best_worst_std,best_avg_mean,best_avg_std\n";

    int status = 0;
    for (const auto& cell : cells) {
        ExperimentConfig sub = cfg;
        std::string cell_name;
        for (const auto& name : names) {
            set_param(sub.train_cfg, name, cell.at(name));
            if (!cell_name.empty()) cell_name += "_";
            cell_name += name + format_double(cell.at(name));
        }
        sub.output_dir = cfg.output_dir + "/cell_" + cell_name;
        log::info("sweep cell " + cell_name);
        int rc = run(sub, parallel);
        status = std::max(status, rc);

        // read back aggregates for the grid
        std::ifstream f(sub.output_dir + "/summary.json");
        json summary = json::parse(f);
        for (const auto& mj : summary.at("methods")) {
            for (const auto& name : names) grid_csv += format_double(cell.at(name)) + ",";
            grid_csv += mj.at("method").get<std::string>();
            for (const char* key : {"best_worst_mean", "best_worst_std", "best_avg_mean",
                                    "best_avg_std"}) {
                grid_csv += ",";
                if (mj.contains(key)) grid_csv += format_double(mj.at(key).get<double>());
            }
            grid_csv += "\n";
        }
    }

    std::ofstream f(cfg.output_dir + "/sweep_grid.csv", std::ios::binary);
    f << grid_csv;
    return status;
}

void emit_plot_data(const std::string& run_dir) {
    std::ifstream sf(run_dir + "/summary.json");
    if (!sf) throw std::runtime_error("not a completed run directory (missing summary.json): " + run_dir);
    json summary = json::parse(sf);

    // Gather everything in memory first so a failure writes no partial files.
    struct SeedReport {
        std::string method;
        int seed;
        json epochs;
        int best_epoch;
    };
    std::vector<SeedReport> reports;
    for (const auto& mj : summary.at("methods")) {
        const std::string method = mj.at("method").get<std::string>();
        for (const auto& oj : mj.at("per_seed")) {
            if (oj.value("failed", false)) continue;
            const int seed = oj.at("seed").get<int>();
            std::string path = run_dir + "/" + method + "/seed_" + std::to_string(seed) + "/report.json";
            std::ifstream rf(path);
            if (!rf) throw std::runtime_error("missing report: " + path);
            json rj = json::parse(rf);
            reports.push_back({method, seed, rj.at("epochs"), rj.at("best_epoch").get<int>()});
        }
    }
    if (reports.empty()) throw std::runtime_error("run directory has no completed seeds: " + run_dir);

    // bars.csv: per-group test accuracy at the best epoch and per-group noise
    // AUC at the last epoch, averaged over seeds.
    std::map<std::string, std::map<std::string, std::pair<double, int>>> bars;  // method -> row key
    auto add_bar = [&](const std::string& method, const std::string& group, const std::string& metric,
                       double v) {
        auto& slot = bars[method][group + "," + metric];
        slot.first += v;
        slot.second += 1;
    };
    for (const auto& r : reports) {
        const json& best_row = r.epochs.at(r.best_epoch);
        const json& last_row = r.epochs.back();
        for (const auto& [key, val] : best_row.items()) {
            if (key.rfind("test_acc_g", 0) == 0)
                add_bar(r.method, "g" + key.substr(10), "test_acc", val.get<double>());
        }
        if (best_row.contains("test_avg_acc"))
            add_bar(r.method, "all", "test_avg_acc", best_row["test_avg_acc"].get<double>());
        if (best_row.contains("test_worst_acc"))
            add_bar(r.method, "all", "test_worst_acc", best_row["test_worst_acc"].get<double>());
        for (const auto& [key, val] : last_row.items()) {
            if (key.rfind("noise_auc_g", 0) == 0)
                add_bar(r.method, "g" + key.substr(11), "noise_auc", val.get<double>());
        }
        if (last_row.contains("noise_auc_overall"))
            add_bar(r.method, "all", "noise_auc", last_row["noise_auc_overall"].get<double>());
    }

    std::string bars_csv = "method,group,metric,value\n";
    for (const auto& [method, rows] : bars) {
        for (const auto& [key, acc] : rows) {
            size_t comma = key.find(',');
            bars_csv += method + "," + key.substr(0, comma) + "," + key.substr(comma + 1) + "," +
                        format_double(acc.first / acc.second) + "\n";
        }
    }

    std::string curves_csv = "method,seed,epoch,metric,value\n";
    for (const auto& r : reports) {
        for (const auto& row : r.epochs) {
            const int epoch = row.at("epoch").get<int>();
            for (const auto& [key, val] : row.items()) {
                if (key == "epoch" || key == "warmup" || !val.is_number()) continue;
                curves_csv += r.method + "," + std::to_string(r.seed) + "," + std::to_string(epoch) +
                              "," + key + "," + format_double(val.get<double>()) + "\n";
            }
        }
    }

    fs::create_directories(run_dir + "/plots");
    {
        std::ofstream f(run_dir + "/plots/bars.csv", std::ios::binary);
        f << bars_csv;
    }
    {
        std::ofstream f(run_dir + "/plots/learning_curves.csv", std::ios::binary);
        f << curves_csv;
    }
}

void gen_data(const ExperimentConfig& cfg, const std::string& out_csv) {
    // Matches the dataset that `run` builds for seed 0 of the same config.
    const uint64_t master = derive_seed(cfg.seed, "run0");
    data::DatasetSpec spec = resolve_train_spec(cfg.dataset, derive_seed(master, "data_train"));
    Rng gen_rng(spec.seed);
    data::Dataset ds = data::generate(spec, gen_rng);
    Rng noise_rng(derive_seed(master, "noise"));
    ds = data::inject_noise(ds, cfg.dataset.noise, noise_rng);

    fs::path p(out_csv);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    data::save_csv(ds, out_csv);
    data::save_sidecar(spec, &cfg.dataset.noise, sidecar_path(out_csv));
}

}  // namespace lnl::runner
