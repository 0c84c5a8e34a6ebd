#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lnl/matrix.hpp"
#include "lnl/rng.hpp"

namespace lnl::data {

// One Gaussian blob: all samples share a class, a group id, and a mean built
// from a core part (carries the class signal) and a spurious part (carries
// the background confound shared across groups).
struct SubpopSpec {
    int class_id = 0;
    int group_id = 0;
    int n_samples = 0;
    std::vector<double> core_mean;
    std::vector<double> spurious_mean;
    double stddev = 1.0;
};

struct DatasetSpec {
    std::vector<SubpopSpec> subpops;
    int d_core = 0;
    int d_spur = 0;
    uint64_t seed = 0;

    int dim() const { return d_core + d_spur; }
    int total_samples() const;
    int num_classes() const;
    int num_groups() const;
    // Throws std::invalid_argument on empty subpops, nonpositive stddev,
    // duplicate group ids, classless groups, or mean/dim mismatches.
    void validate() const;
};

enum class NoiseKind { symmetric, asymmetric };

struct NoiseSpec {
    NoiseKind kind = NoiseKind::symmetric;
    double rate = 0.0;
    // Symmetric noise flips to a *different* class by default; include_self
    // draws uniformly over all C classes instead (CIFAR-style corruption).
    bool include_self = false;
    // Row-stochastic C x C matrix, required iff kind == asymmetric.
    std::vector<std::vector<double>> transition;

    void validate(int num_classes) const;
};

struct Dataset {
    Matrix features;                 // N x d
    std::vector<int> noisy_labels;   // what training sees
    std::vector<int> true_labels;    // hidden: evaluation only
    std::vector<int> group_ids;      // hidden: evaluation only
    std::vector<uint8_t> corrupted;  // hidden: noisy_labels[i] != true_labels[i]
    int num_classes = 0;

    int n() const { return features.rows; }
    int dim() const { return features.cols; }
};

// The only slice of a Dataset that training code is allowed to touch.
struct TrainView {
    const Matrix* features = nullptr;
    const std::vector<int>* noisy_labels = nullptr;
    int num_classes = 0;

    int n() const { return features->rows; }
    int dim() const { return features->cols; }
};

inline TrainView training_view(const Dataset& ds) {
    return TrainView{&ds.features, &ds.noisy_labels, ds.num_classes};
}

// Draws every subpopulation from an isotropic Gaussian around its mean and
// shuffles row order. true_labels = class_id, corrupted all false.
Dataset generate(const DatasetSpec& spec, Rng& rng);

// Re-applies corruption from true_labels. Symmetric: exactly round(rate*N)
// samples flipped, chosen without replacement. Asymmetric: every label drawn
// independently from its true label's transition row.
Dataset inject_noise(const Dataset& ds, const NoiseSpec& spec, Rng& rng);

// Vector-space stand-ins for image augmentation: weak = Gaussian jitter,
// strong = larger jitter followed by independent coordinate dropout.
std::vector<double> augment_weak(const double* x, int d, double sigma_w, Rng& rng);
std::vector<double> augment_strong(const double* x, int d, double sigma_s, double p_drop, Rng& rng);

// CSV with header f0..f{d-1},noisy_label,true_label,group_id,corrupted.
// Doubles are written shortest-round-trip, so save/load is bit-exact.
void save_csv(const Dataset& ds, const std::string& path);
Dataset load_csv(const std::string& path);

// JSON sidecar carrying the generating spec (and noise, when given).
void save_sidecar(const DatasetSpec& spec, const NoiseSpec* noise, const std::string& path);
void load_sidecar(const std::string& path, DatasetSpec& spec, NoiseSpec& noise, bool& has_noise);

// Scenario presets. n_samples is the total size; group proportions follow the
// corrupted-benchmark layouts (95/5 head/tail per class for waterbirds-like,
// a ~1% tail group for celeba-like). Class cores point in opposite directions;
// each class's majority group shares its spurious direction with the opposite
// class's minority group.
DatasetSpec waterbirds_like_spec(int n_samples, uint64_t seed);
DatasetSpec celeba_like_spec(int n_samples, uint64_t seed);

}  // namespace lnl::data
