#pragma once

#include <vector>

#include "lnl/matrix.hpp"

namespace lnl::conf {

// k best cosine-similarity neighbors per sample, self excluded, ties broken
// toward the smaller index. Lists have exactly min(k, N-1) entries.
struct NeighborGraph {
    std::vector<std::vector<int>> neighbors;
    int k = 0;
};

// Per-sample fraction of neighbors carrying the same (noisy) label.
struct LlcScores {
    std::vector<double> scores;
};

// 1-D two-component Gaussian mixture, components sorted by mean.
struct Gmm1D {
    double mean0 = 0.0, mean1 = 0.0;
    double var0 = 1.0, var1 = 1.0;
    double weight0 = 0.5, weight1 = 0.5;
    bool degenerate = false;
    std::vector<double> ll_trace;  // log-likelihood after each EM iteration
};

struct GmmConfig {
    int max_iter = 100;
    double tol = 1e-6;
    double variance_floor = 1e-6;
};

struct ConfidenceState {
    std::vector<double> scores;  // LLC or loss-based, whatever fed the GMM
    Gmm1D gmm;
    std::vector<double> w;  // per-sample clean probability, in [0,1]
};

// Zero-norm vectors (possible under dead rectifier units) compare as 0 to
// everything rather than producing NaNs.
double cosine_similarity(const double* a, const double* b, int n);

// Full pairwise cosine similarity, one row at a time (O(N) memory).
// Throws when N < 2.
NeighborGraph knn(const Matrix& features, int k);

// normalize=true divides the same-label count by the list length so scores
// land in [0,1]; normalize=false keeps the raw count.
LlcScores llc_scores(const NeighborGraph& graph, const std::vector<int>& noisy_labels,
                     bool normalize = true);

// Min-max-normalized, negated losses: larger score = cleaner. Constant
// losses map to 0.5 everywhere.
std::vector<double> loss_based_scores(const std::vector<double>& losses);

// EM from percentile init (means at the 25th/75th percentiles, variances at
// the global variance, weights 0.5/0.5). Marks the fit degenerate when the
// components collapse onto each other or one loses all mass.
Gmm1D fit_gmm(const std::vector<double>& scores, const GmmConfig& cfg = {});

// Posterior of the larger-mean component, evaluated in log space.
// Degenerate fits return 1 (fall back to trusting the given labels).
double posterior_clean(const Gmm1D& gmm, double score);

// GMM -> posterior for a whole score vector, then a running-max sweep in
// score order so confidence is nondecreasing in the score even when the
// fitted variances differ.
ConfidenceState estimate_from_scores(const std::vector<double>& scores, const GmmConfig& cfg = {});

// knn -> llc_scores -> fit_gmm -> posterior for every sample.
ConfidenceState estimate(const Matrix& features, const std::vector<int>& noisy_labels, int k,
                         const GmmConfig& cfg = {}, bool raw_counts = false);

}  // namespace lnl::conf
