#include "lnl/robust_train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "lnl/log.hpp"

namespace lnl::train {

namespace {

void append_double(std::string& out, double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

std::vector<double> one_hot(int label, int c) {
    std::vector<double> v(c, 0.0);
    v[label] = 1.0;
    return v;
}

// Penultimate features of the current model on the raw (unaugmented) inputs.
Matrix extract_features(const nn::ModelParams& params, const data::TrainView& view) {
    Matrix z(view.n(), params.h);
    for (int i = 0; i < view.n(); ++i) {
        nn::ForwardResult r = nn::forward(params, view.features->row(i));
        std::copy(r.z.begin(), r.z.end(), z.row(i));
    }
    return z;
}

std::vector<double> per_sample_losses(const nn::ModelParams& params, const data::TrainView& view) {
    std::vector<double> losses(view.n());
    for (int i = 0; i < view.n(); ++i) {
        nn::ForwardResult r = nn::forward(params, view.features->row(i));
        losses[i] = nn::soft_cross_entropy(r.probs, one_hot((*view.noisy_labels)[i], view.num_classes));
    }
    return losses;
}

conf::ConfidenceState estimate_confidence(const nn::ModelParams& params,
                                          const data::TrainView& view, const TrainConfig& cfg) {
    if (cfg.use_llc) {
        Matrix z = extract_features(params, view);
        return conf::estimate(z, *view.noisy_labels, cfg.k, cfg.gmm, cfg.raw_llc_counts);
    }
    std::vector<double> losses = per_sample_losses(params, view);
    return conf::estimate_from_scores(conf::loss_based_scores(losses), cfg.gmm);
}

}  // namespace

void TrainConfig::validate() const {
    if (e_warmup < 0) throw std::invalid_argument("TrainConfig: e_warmup must be >= 0");
    if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (k < 1) throw std::invalid_argument("TrainConfig: k must be >= 1");
    if (!(tau > 0.0 && tau <= 100.0)) throw std::invalid_argument("TrainConfig: tau must be in (0,100]");
    if (hidden < 1) throw std::invalid_argument("TrainConfig: hidden must be >= 1");
    if (sigma_w < 0.0 || sigma_s < 0.0) throw std::invalid_argument("TrainConfig: negative jitter scale");
    if (p_drop < 0.0 || p_drop > 1.0) throw std::invalid_argument("TrainConfig: p_drop must be in [0,1]");
}

std::vector<double> refurbish(const std::vector<double>& noisy_onehot,
                              const std::vector<double>& pseudo, double w) {
    if (noisy_onehot.size() != pseudo.size())
        throw std::invalid_argument("refurbish: length mismatch");
    if (w < 0.0 || w > 1.0) throw std::invalid_argument("refurbish: w must be in [0,1]");
    std::vector<double> out(noisy_onehot.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = w * noisy_onehot[i] + (1.0 - w) * pseudo[i];
    return out;
}

std::vector<double> pseudo_label(const nn::ModelParams& m, const nn::ModelParams* peer,
                                 const double* x, int d, double sigma_w, Rng& rng) {
    std::vector<double> xw = data::augment_weak(x, d, sigma_w, rng);
    std::vector<double> probs = nn::forward(m, xw.data()).probs;
    if (peer) {
        std::vector<double> peer_probs = nn::forward(*peer, xw.data()).probs;
        for (size_t i = 0; i < probs.size(); ++i) probs[i] = 0.5 * (probs[i] + peer_probs[i]);
    }
    return probs;
}

std::vector<int> select_top_tau(const std::vector<double>& losses, double tau) {
    if (losses.empty()) throw std::invalid_argument("select_top_tau: empty losses");
    const int n = static_cast<int>(losses.size());
    const int m = std::max(1, static_cast<int>(std::floor(n * tau / 100.0)));

    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + m, idx.end(), [&](int a, int b) {
        if (losses[a] != losses[b]) return losses[a] > losses[b];
        return a < b;
    });
    idx.resize(m);
    std::sort(idx.begin(), idx.end());
    return idx;
}

double warmup_epoch(nn::ModelParams& params, nn::OptState& opt, const data::TrainView& view,
                    const TrainConfig& cfg, Rng& shuffle_rng, Rng& augment_rng) {
    const int n = view.n();
    const int d = view.dim();
    const int c = view.num_classes;
    const int b = cfg.batch_size;
    const int num_batches = n / b;

    std::vector<int> perm = shuffle_rng.permutation(n);

    double loss_sum = 0.0;
    long long loss_count = 0;
    std::vector<std::vector<double>> views(b);
    std::vector<std::vector<double>> targets(b);
    std::vector<nn::TrainSample> batch(b);

    for (int bi = 0; bi < num_batches; ++bi) {
        for (int s = 0; s < b; ++s) {
            const int i = perm[bi * b + s];
            views[s] = data::augment_weak(view.features->row(i), d, cfg.sigma_w, augment_rng);
            targets[s] = one_hot((*view.noisy_labels)[i], c);
            batch[s] = nn::TrainSample{views[s].data(), targets[s].data(), 1.0};
        }
        nn::Grads g = nn::backward(params, batch);
        nn::sgd_step(params, g, opt);

        for (int s = 0; s < b; ++s) {
            loss_sum += nn::soft_cross_entropy(nn::forward(params, batch[s].x).probs, targets[s]);
            ++loss_count;
        }
    }
    return loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
}

double robust_train_epoch(nn::ModelParams& params, const nn::ModelParams* peer,
                          nn::OptState& opt, const data::TrainView& view,
                          const std::vector<double>& w, const TrainConfig& cfg,
                          Rng& shuffle_rng, Rng& augment_rng) {
    if (static_cast<int>(w.size()) != view.n())
        throw std::invalid_argument("robust_train_epoch: confidence size mismatch");

    const int n = view.n();
    const int d = view.dim();
    const int c = view.num_classes;
    const int b = cfg.batch_size;
    const int num_batches = n / b;
    const double tau = cfg.use_dro ? cfg.tau : 100.0;

    std::vector<int> perm = shuffle_rng.permutation(n);

    double selected_loss_sum = 0.0;
    long long selected_count = 0;
    std::vector<std::vector<double>> strong_views(b);
    std::vector<nn::TrainSample> batch(b);

    for (int bi = 0; bi < num_batches; ++bi) {
        RefurbishedBatch rb;
        rb.indices.assign(perm.begin() + bi * b, perm.begin() + (bi + 1) * b);
        rb.y_star.resize(b);
        rb.losses.resize(b);

        for (int s = 0; s < b; ++s) {
            const int i = rb.indices[s];
            const double* x = view.features->row(i);
            std::vector<double> pseudo = pseudo_label(params, peer, x, d, cfg.sigma_w, augment_rng);
            rb.y_star[s] = refurbish(one_hot((*view.noisy_labels)[i], c), pseudo, w[i]);
            strong_views[s] = data::augment_strong(x, d, cfg.sigma_s, cfg.p_drop, augment_rng);
            rb.losses[s] =
                nn::soft_cross_entropy(nn::forward(params, strong_views[s].data()).probs, rb.y_star[s]);
        }

        std::vector<int> selected = select_top_tau(rb.losses, tau);
        rb.selected_mask.assign(b, 0);
        for (int s : selected) rb.selected_mask[s] = 1;

        for (int s = 0; s < b; ++s) {
            batch[s] = nn::TrainSample{strong_views[s].data(), rb.y_star[s].data(),
                                       rb.selected_mask[s] ? 1.0 : 0.0};
        }
        nn::Grads g = nn::backward(params, batch);
        nn::sgd_step(params, g, opt);

        for (int s : selected) {
            selected_loss_sum += rb.losses[s];
            ++selected_count;
        }
    }
    return selected_count ? selected_loss_sum / static_cast<double>(selected_count) : 0.0;
}

TrainResult train(const data::TrainView& view, const TrainConfig& cfg, const EpochEval* eval) {
    cfg.validate();
    if (view.n() < 1) throw std::invalid_argument("train: empty dataset");

    // Each model slot owns a bundle of named streams derived from the master
    // seed. Swapping the suffixes swaps the two trajectories exactly.
    const char* suffix_a = cfg.swap_model_streams ? "_b" : "_a";
    const char* suffix_b = cfg.swap_model_streams ? "_a" : "_b";
    auto slot_stream = [&](const char* purpose, const char* suffix) {
        return Rng::stream(cfg.seed, std::string(purpose) + suffix);
    };

    Rng init_a = slot_stream("init", suffix_a);
    Rng init_b = slot_stream("init", suffix_b);
    Rng shuffle_a = slot_stream("shuffle", suffix_a);
    Rng shuffle_b = slot_stream("shuffle", suffix_b);
    Rng augment_a = slot_stream("augment", suffix_a);
    Rng augment_b = slot_stream("augment", suffix_b);

    TrainResult res;
    TrainState& st = res.last;
    st.params_a = nn::init(view.dim(), cfg.hidden, view.num_classes, init_a);
    st.opt_a.learning_rate = cfg.lr;
    st.opt_a.momentum = cfg.momentum;
    st.has_b = cfg.co_training;
    if (st.has_b) {
        st.params_b = nn::init(view.dim(), cfg.hidden, view.num_classes, init_b);
        st.opt_b.learning_rate = cfg.lr;
        st.opt_b.momentum = cfg.momentum;
    }

    double best_metric = -std::numeric_limits<double>::infinity();
    auto record_epoch = [&](bool warmup, double train_loss, const std::vector<double>& w_report) {
        EpochRecord rec;
        rec.epoch = st.epoch;
        rec.warmup = warmup;
        rec.train_loss = train_loss;
        if (eval && *eval) rec.metrics = (*eval)(st, w_report);
        auto it = rec.metrics.find("val_metric");
        if (it != rec.metrics.end() && it->second > best_metric) {
            best_metric = it->second;
            res.report.best_epoch = st.epoch;
            res.best = st;
        }
        res.report.epochs.push_back(std::move(rec));
        st.epoch += 1;
    };

    const std::vector<double> no_w;
    for (int e = 0; e < cfg.e_warmup; ++e) {
        double loss = warmup_epoch(st.params_a, st.opt_a, view, cfg, shuffle_a, augment_a);
        if (st.has_b) {
            double loss_b = warmup_epoch(st.params_b, st.opt_b, view, cfg, shuffle_b, augment_b);
            loss = 0.5 * (loss + loss_b);
        }
        record_epoch(true, loss, no_w);
        log::debug("warmup epoch " + std::to_string(st.epoch) + " loss " + std::to_string(loss));
    }

    for (int e = 0; e < cfg.epochs; ++e) {
        st.confidence_a = estimate_confidence(st.params_a, view, cfg);
        if (st.has_b) st.confidence_b = estimate_confidence(st.params_b, view, cfg);

        // Cross-assignment: each model trains with its peer's estimate.
        const std::vector<double>& w_a = st.has_b ? st.confidence_b.w : st.confidence_a.w;
        const std::vector<double>& w_b = st.confidence_a.w;

        // Both models read the peer's epoch-start parameters for the
        // ensemble, so their epochs are order-independent.
        nn::ModelParams peer_of_a, peer_of_b;
        if (st.has_b) {
            peer_of_a = st.params_b;
            peer_of_b = st.params_a;
        }
        double loss = robust_train_epoch(st.params_a, st.has_b ? &peer_of_a : nullptr, st.opt_a,
                                         view, w_a, cfg, shuffle_a, augment_a);
        if (st.has_b) {
            double loss_b = robust_train_epoch(st.params_b, &peer_of_b, st.opt_b, view, w_b, cfg,
                                               shuffle_b, augment_b);
            loss = 0.5 * (loss + loss_b);
        }

        std::vector<double> w_report = st.confidence_a.w;
        if (st.has_b) {
            for (size_t i = 0; i < w_report.size(); ++i)
                w_report[i] = 0.5 * (w_report[i] + st.confidence_b.w[i]);
        }
        record_epoch(false, loss, w_report);
        log::debug("robust epoch " + std::to_string(st.epoch) + " loss " + std::to_string(loss));
    }

    if (res.report.best_epoch < 0) {
        res.best = st;
        res.report.best_epoch = st.epoch > 0 ? st.epoch - 1 : 0;
    }
    return res;
}

void save_report_json(const RunReport& report, const std::string& path) {
    nlohmann::json j;
    j["best_epoch"] = report.best_epoch;
    j["epochs"] = nlohmann::json::array();
    for (const auto& rec : report.epochs) {
        nlohmann::json r;
        r["epoch"] = rec.epoch;
        r["warmup"] = rec.warmup;
        r["train_loss"] = rec.train_loss;
        for (const auto& [k, v] : rec.metrics) r[k] = v;
        j["epochs"].push_back(std::move(r));
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f << j.dump(2) << "\n";
}

void save_report_csv(const RunReport& report, const std::string& path) {
    std::set<std::string> keys;
    for (const auto& rec : report.epochs) {
        for (const auto& [k, v] : rec.metrics) keys.insert(k);
    }

    std::string out = "epoch,warmup,train_loss";
    for (const auto& k : keys) out += "," + k;
    out += "\n";
    for (const auto& rec : report.epochs) {
        out += std::to_string(rec.epoch) + "," + (rec.warmup ? "1" : "0") + ",";
        append_double(out, rec.train_loss);
        for (const auto& k : keys) {
            out += ',';
            auto it = rec.metrics.find(k);
            if (it != rec.metrics.end()) append_double(out, it->second);
        }
        out += "\n";
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f << out;
}

}  // namespace lnl::train
