#include "lnl/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace lnl::metrics {

double accuracy(const std::vector<int>& predictions, const std::vector<int>& true_labels) {
    if (predictions.empty()) throw std::invalid_argument("accuracy: empty input");
    if (predictions.size() != true_labels.size())
        throw std::invalid_argument("accuracy: length mismatch");
    long long correct = 0;
    for (size_t i = 0; i < predictions.size(); ++i) correct += predictions[i] == true_labels[i];
    return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

GroupReport group_report(const std::vector<int>& predictions, const std::vector<int>& true_labels,
                         const std::vector<int>& group_ids,
                         const std::vector<int>* expected_groups) {
    if (predictions.empty()) throw std::invalid_argument("group_report: empty input");
    if (predictions.size() != true_labels.size() || predictions.size() != group_ids.size())
        throw std::invalid_argument("group_report: length mismatch");

    GroupReport rep;
    std::map<int, long long> correct;
    for (size_t i = 0; i < predictions.size(); ++i) {
        rep.per_group_size[group_ids[i]] += 1;
        correct[group_ids[i]] += predictions[i] == true_labels[i];
    }

    long long total_correct = 0;
    double worst = 1.0;
    for (const auto& [g, size] : rep.per_group_size) {
        const double acc = static_cast<double>(correct[g]) / static_cast<double>(size);
        rep.per_group_accuracy[g] = acc;
        total_correct += correct[g];
        worst = std::min(worst, acc);
    }
    rep.avg_accuracy = static_cast<double>(total_correct) / static_cast<double>(predictions.size());
    rep.worst_group_accuracy = worst;

    if (expected_groups) {
        for (int g : *expected_groups) {
            if (!rep.per_group_size.count(g)) rep.empty_groups.push_back(g);
        }
    }
    return rep;
}

std::optional<double> noise_auc(const std::vector<double>& noisiness_scores,
                                const std::vector<uint8_t>& corrupted) {
    if (noisiness_scores.size() != corrupted.size())
        throw std::invalid_argument("noise_auc: length mismatch");
    const size_t n = noisiness_scores.size();

    size_t n_pos = 0;
    for (uint8_t c : corrupted) n_pos += c ? 1 : 0;
    const size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;

    // Average ranks over tie groups, then the Mann-Whitney statistic.
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return noisiness_scores[a] < noisiness_scores[b];
    });

    double pos_rank_sum = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j < n && noisiness_scores[order[j]] == noisiness_scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
        for (size_t t = i; t < j; ++t) {
            if (corrupted[order[t]]) pos_rank_sum += avg_rank;
        }
        i = j;
    }
    const double u = pos_rank_sum - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

NoiseIdReport noise_id_report(const std::vector<double>& w, const std::vector<uint8_t>& corrupted,
                              const std::vector<int>& group_ids) {
    if (w.size() != corrupted.size() || w.size() != group_ids.size())
        throw std::invalid_argument("noise_id_report: length mismatch");

    std::vector<double> noisiness(w.size());
    for (size_t i = 0; i < w.size(); ++i) noisiness[i] = 1.0 - w[i];

    NoiseIdReport rep;
    rep.auc_overall = noise_auc(noisiness, corrupted);

    std::map<int, std::vector<int>> members;
    for (size_t i = 0; i < group_ids.size(); ++i) members[group_ids[i]].push_back(static_cast<int>(i));
    for (const auto& [g, idx] : members) {
        std::vector<double> s;
        std::vector<uint8_t> c;
        s.reserve(idx.size());
        c.reserve(idx.size());
        for (int i : idx) {
            s.push_back(noisiness[i]);
            c.push_back(corrupted[i]);
        }
        rep.auc_per_group[g] = noise_auc(s, c);
    }
    return rep;
}

std::vector<std::vector<long long>> confusion_matrix(const std::vector<int>& predictions,
                                                     const std::vector<int>& true_labels,
                                                     int num_classes) {
    if (predictions.size() != true_labels.size())
        throw std::invalid_argument("confusion_matrix: length mismatch");
    std::vector<std::vector<long long>> counts(num_classes,
                                               std::vector<long long>(num_classes, 0));
    for (size_t i = 0; i < predictions.size(); ++i) {
        if (true_labels[i] < 0 || true_labels[i] >= num_classes || predictions[i] < 0 ||
            predictions[i] >= num_classes)
            throw std::invalid_argument("confusion_matrix: label out of range");
        counts[true_labels[i]][predictions[i]] += 1;
    }
    return counts;
}

void save_confusion_csv(const std::vector<std::vector<long long>>& counts, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    for (const auto& row : counts) {
        for (size_t j = 0; j < row.size(); ++j) {
            if (j) f << ',';
            f << row[j];
        }
        f << '\n';
    }
}

}  // namespace lnl::metrics
