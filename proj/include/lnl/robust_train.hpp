#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lnl/confidence.hpp"
#include "lnl/datagen.hpp"
#include "lnl/model.hpp"
#include "lnl/rng.hpp"

namespace lnl::train {

struct TrainConfig {
    int e_warmup = 5;    // ERM epochs before confidence-guided training
    int epochs = 50;     // confidence-guided epochs
    int batch_size = 64;
    int k = 20;          // neighbor count for the consistency score
    double tau = 70.0;   // percentage of each batch kept by the worst-case selection
    double lr = 0.05;
    double momentum = 0.9;
    double sigma_w = 0.05;  // weak jitter scale
    double sigma_s = 0.2;   // strong jitter scale
    double p_drop = 0.2;    // strong-view coordinate dropout
    int hidden = 32;
    bool use_llc = true;      // feature-consistency confidence vs. loss-based
    bool use_dro = true;      // top-tau% selection vs. full batch
    bool co_training = true;  // two models with crossed confidences
    bool raw_llc_counts = false;
    uint64_t seed = 1;
    // Test support: hands each model slot the other slot's derived rng
    // streams, so the two trajectories swap exactly.
    bool swap_model_streams = false;
    conf::GmmConfig gmm;

    void validate() const;
};

struct TrainState {
    nn::ModelParams params_a, params_b;
    nn::OptState opt_a, opt_b;
    int epoch = 0;
    // Confidence estimated FROM each model's features this epoch. In
    // co-training mode each model trains with its peer's estimate.
    conf::ConfidenceState confidence_a, confidence_b;
    bool has_b = false;
};

// One mini-batch after refurbishment, before the gradient step.
struct RefurbishedBatch {
    std::vector<int> indices;             // dataset rows in this batch
    std::vector<std::vector<double>> y_star;
    std::vector<double> losses;           // H(y_star, probs on strong view)
    std::vector<uint8_t> selected_mask;   // top-tau% by loss
};

struct EpochRecord {
    int epoch = 0;
    bool warmup = false;
    double train_loss = 0.0;
    std::map<std::string, double> metrics;  // from the eval hook
};

struct RunReport {
    std::vector<EpochRecord> epochs;
    int best_epoch = -1;
};

// Evaluation hook. The trainer itself never touches hidden ground truth;
// the hook owns that data and returns named metrics. If it returns the key
// "val_metric", the largest value across epochs selects the best snapshot.
// w_report is the per-sample confidence used this epoch (mean of the two
// models' estimates in co-training mode); empty during warmup.
using EpochEval = std::function<std::map<std::string, double>(const TrainState&,
                                                              const std::vector<double>& w_report)>;

struct TrainResult {
    TrainState last;
    TrainState best;
    RunReport report;
};

// y* = w * noisy_onehot + (1 - w) * pseudo.
std::vector<double> refurbish(const std::vector<double>& noisy_onehot,
                              const std::vector<double>& pseudo, double w);

// Prediction on one weak view of x; with a peer, the elementwise mean of the
// two models' predictions on the same view.
std::vector<double> pseudo_label(const nn::ModelParams& m, const nn::ModelParams* peer,
                                 const double* x, int d, double sigma_w, Rng& rng);

// Indices (ascending) of the max(1, floor(n * tau / 100)) largest losses,
// ties broken toward the smaller index.
std::vector<int> select_top_tau(const std::vector<double>& losses, double tau);

// One ERM epoch on noisy one-hot targets over weak views. Returns the mean
// per-sample loss over the floor(N/B) processed batches.
double warmup_epoch(nn::ModelParams& params, nn::OptState& opt, const data::TrainView& view,
                    const TrainConfig& cfg, Rng& shuffle_rng, Rng& augment_rng);

// One confidence-guided epoch: pseudo-labels on weak views, refurbishment,
// losses on strong views, top-tau% selection, one SGD step per batch on the
// mean selected loss. Returns the mean selected loss.
double robust_train_epoch(nn::ModelParams& params, const nn::ModelParams* peer,
                          nn::OptState& opt, const data::TrainView& view,
                          const std::vector<double>& w, const TrainConfig& cfg,
                          Rng& shuffle_rng, Rng& augment_rng);

// Full pipeline: warmup, then per-epoch confidence estimation (feature
// consistency or loss-based) and robust training, with confidences crossed
// between the two models in co-training mode.
TrainResult train(const data::TrainView& view, const TrainConfig& cfg,
                  const EpochEval* eval = nullptr);

void save_report_json(const RunReport& report, const std::string& path);
void save_report_csv(const RunReport& report, const std::string& path);

}  // namespace lnl::train
