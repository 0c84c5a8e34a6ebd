#include "lnl/confidence.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace lnl::conf {

namespace {

constexpr double kNormFloor = 1e-12;

double percentile(std::vector<double> sorted, double q) {
    // sorted must be ascending; linear interpolation between ranks
    if (sorted.empty()) throw std::invalid_argument("percentile of empty vector");
    const double pos = q * (sorted.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

double log_normal_pdf(double x, double mean, double var) {
    const double diff = x - mean;
    return -0.5 * (std::log(2.0 * M_PI * var) + diff * diff / var);
}

}  // namespace

double cosine_similarity(const double* a, const double* b, int n) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int i = 0; i < n; ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na < kNormFloor || nb < kNormFloor) return 0.0;
    return dot / (na * nb);
}

NeighborGraph knn(const Matrix& features, int k) {
    const int n = features.rows;
    if (n < 2) throw std::invalid_argument("knn: need at least 2 samples");
    if (k < 1) throw std::invalid_argument("knn: k must be >= 1");

    const int list_len = std::min(k, n - 1);
    NeighborGraph graph;
    graph.k = k;
    graph.neighbors.resize(n);

    std::vector<double> sims(n);
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) {
        const double* zi = features.row(i);
        for (int j = 0; j < n; ++j) sims[j] = cosine_similarity(zi, features.row(j), features.cols);

        idx.resize(n - 1);
        int pos = 0;
        for (int j = 0; j < n; ++j) {
            if (j != i) idx[pos++] = j;
        }
        auto better = [&](int a, int b) {
            if (sims[a] != sims[b]) return sims[a] > sims[b];
            return a < b;
        };
        std::partial_sort(idx.begin(), idx.begin() + list_len, idx.end(), better);
        graph.neighbors[i].assign(idx.begin(), idx.begin() + list_len);
    }
    return graph;
}

LlcScores llc_scores(const NeighborGraph& graph, const std::vector<int>& noisy_labels,
                     bool normalize) {
    if (graph.neighbors.size() != noisy_labels.size())
        throw std::invalid_argument("llc_scores: graph/label size mismatch");

    LlcScores out;
    out.scores.resize(noisy_labels.size());
    for (size_t i = 0; i < noisy_labels.size(); ++i) {
        const auto& nbrs = graph.neighbors[i];
        int same = 0;
        for (int j : nbrs) same += noisy_labels[j] == noisy_labels[i] ? 1 : 0;
        out.scores[i] = normalize ? static_cast<double>(same) / static_cast<double>(nbrs.size())
                                  : static_cast<double>(same);
    }
    return out;
}

std::vector<double> loss_based_scores(const std::vector<double>& losses) {
    if (losses.empty()) throw std::invalid_argument("loss_based_scores: empty input");
    double lo = losses[0], hi = losses[0];
    for (double l : losses) {
        if (!std::isfinite(l) || l < 0.0)
            throw std::invalid_argument("loss_based_scores: losses must be finite and >= 0");
        lo = std::min(lo, l);
        hi = std::max(hi, l);
    }
    std::vector<double> scores(losses.size());
    if (hi - lo < kNormFloor) {
        std::fill(scores.begin(), scores.end(), 0.5);
        return scores;
    }
    const double span = hi - lo;
    for (size_t i = 0; i < losses.size(); ++i) scores[i] = 1.0 - (losses[i] - lo) / span;
    return scores;
}

Gmm1D fit_gmm(const std::vector<double>& scores, const GmmConfig& cfg) {
    const size_t n = scores.size();
    if (n < 2) throw std::invalid_argument("fit_gmm: need at least 2 scores");

    std::vector<double> sorted(scores);
    std::sort(sorted.begin(), sorted.end());

    Gmm1D gmm;
    if (sorted.back() - sorted.front() < kNormFloor) {
        gmm.mean0 = gmm.mean1 = sorted.front();
        gmm.var0 = gmm.var1 = cfg.variance_floor;
        gmm.degenerate = true;
        return gmm;
    }

    double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double s : scores) var += (s - mean) * (s - mean);
    var = std::max(var / static_cast<double>(n), cfg.variance_floor);

    double mu[2] = {percentile(sorted, 0.25), percentile(sorted, 0.75)};
    double sig2[2] = {var, var};
    double pi[2] = {0.5, 0.5};

    std::vector<double> resp(n);  // responsibility of component 1
    double prev_ll = -std::numeric_limits<double>::infinity();

    for (int iter = 0; iter < cfg.max_iter; ++iter) {
        // E-step in log space
        double ll = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const double l0 = std::log(pi[0]) + log_normal_pdf(scores[i], mu[0], sig2[0]);
            const double l1 = std::log(pi[1]) + log_normal_pdf(scores[i], mu[1], sig2[1]);
            const double m = std::max(l0, l1);
            const double lse = m + std::log(std::exp(l0 - m) + std::exp(l1 - m));
            resp[i] = std::exp(l1 - lse);
            ll += lse;
        }
        gmm.ll_trace.push_back(ll);

        // M-step, closed form
        double r1 = 0.0, s1 = 0.0, s0 = 0.0;
        for (size_t i = 0; i < n; ++i) {
            r1 += resp[i];
            s1 += resp[i] * scores[i];
            s0 += (1.0 - resp[i]) * scores[i];
        }
        const double r0 = static_cast<double>(n) - r1;
        if (r0 < 1e-8 || r1 < 1e-8) {
            gmm.degenerate = true;
            break;
        }
        mu[0] = s0 / r0;
        mu[1] = s1 / r1;
        double v0 = 0.0, v1 = 0.0;
        for (size_t i = 0; i < n; ++i) {
            v0 += (1.0 - resp[i]) * (scores[i] - mu[0]) * (scores[i] - mu[0]);
            v1 += resp[i] * (scores[i] - mu[1]) * (scores[i] - mu[1]);
        }
        sig2[0] = std::max(v0 / r0, cfg.variance_floor);
        sig2[1] = std::max(v1 / r1, cfg.variance_floor);
        pi[0] = r0 / static_cast<double>(n);
        pi[1] = r1 / static_cast<double>(n);

        if (std::abs(ll - prev_ll) < cfg.tol) break;
        prev_ll = ll;
    }

    if (mu[0] <= mu[1]) {
        gmm.mean0 = mu[0];
        gmm.mean1 = mu[1];
        gmm.var0 = sig2[0];
        gmm.var1 = sig2[1];
        gmm.weight0 = pi[0];
        gmm.weight1 = pi[1];
    } else {
        gmm.mean0 = mu[1];
        gmm.mean1 = mu[0];
        gmm.var0 = sig2[1];
        gmm.var1 = sig2[0];
        gmm.weight0 = pi[1];
        gmm.weight1 = pi[0];
    }
    if (std::abs(gmm.mean1 - gmm.mean0) < 1e-6) gmm.degenerate = true;
    return gmm;
}

double posterior_clean(const Gmm1D& gmm, double score) {
    if (gmm.degenerate) return 1.0;
    const double l0 = std::log(gmm.weight0) + log_normal_pdf(score, gmm.mean0, gmm.var0);
    const double l1 = std::log(gmm.weight1) + log_normal_pdf(score, gmm.mean1, gmm.var1);
    // w = 1 / (1 + exp(l0 - l1)), clamped against overflow
    const double diff = l0 - l1;
    if (diff > 700.0) return 0.0;
    if (diff < -700.0) return 1.0;
    return 1.0 / (1.0 + std::exp(diff));
}

ConfidenceState estimate_from_scores(const std::vector<double>& scores, const GmmConfig& cfg) {
    ConfidenceState st;
    st.scores = scores;
    st.gmm = fit_gmm(scores, cfg);
    st.w.resize(scores.size());
    for (size_t i = 0; i < scores.size(); ++i) st.w[i] = posterior_clean(st.gmm, scores[i]);

    // The raw posterior of the larger-mean component is not monotone in the
    // score when the two variances differ (the tighter component loses both
    // tails). Sweep a running max in score order so a higher score never gets
    // a lower confidence.
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] < scores[b]; });
    double running = 0.0;
    for (int i : order) {
        running = std::max(running, st.w[i]);
        st.w[i] = running;
    }
    return st;
}

ConfidenceState estimate(const Matrix& features, const std::vector<int>& noisy_labels, int k,
                         const GmmConfig& cfg, bool raw_counts) {
    NeighborGraph graph = knn(features, k);
    LlcScores llc = llc_scores(graph, noisy_labels, !raw_counts);
    return estimate_from_scores(llc.scores, cfg);
}

}  // namespace lnl::conf
