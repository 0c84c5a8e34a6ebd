#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lnl::metrics {

struct GroupReport {
    std::map<int, double> per_group_accuracy;
    std::map<int, int> per_group_size;
    double avg_accuracy = 0.0;          // sample-weighted over all samples
    double worst_group_accuracy = 0.0;  // min over groups with >= 1 sample
    std::vector<int> empty_groups;      // expected groups with no samples
};

struct NoiseIdReport {
    std::optional<double> auc_overall;
    // Absent value = undefined (group lacks a corrupted or a clean sample).
    std::map<int, std::optional<double>> auc_per_group;
};

// Fraction correct. Throws on empty or mismatched input.
double accuracy(const std::vector<int>& predictions, const std::vector<int>& true_labels);

// Per-group accuracy plus the sample-weighted average and the minimum.
// expected_groups (optional) lists group ids that should exist; those with
// zero samples are flagged in empty_groups and skipped in the minimum.
GroupReport group_report(const std::vector<int>& predictions, const std::vector<int>& true_labels,
                         const std::vector<int>& group_ids,
                         const std::vector<int>* expected_groups = nullptr);

// Mann-Whitney AUC of the noisiness score against corruption flags, ties at
// half credit, computed from rank statistics. nullopt when either class of
// sample is missing.
std::optional<double> noise_auc(const std::vector<double>& noisiness_scores,
                                const std::vector<uint8_t>& corrupted);

// noisiness = 1 - w; per-group AUCs are undefined (absent) for groups
// without both a corrupted and a clean sample.
NoiseIdReport noise_id_report(const std::vector<double>& w, const std::vector<uint8_t>& corrupted,
                              const std::vector<int>& group_ids);

// counts[r][c] = samples with true label r predicted as c.
std::vector<std::vector<long long>> confusion_matrix(const std::vector<int>& predictions,
                                                     const std::vector<int>& true_labels,
                                                     int num_classes);

void save_confusion_csv(const std::vector<std::vector<long long>>& counts, const std::string& path);

}  // namespace lnl::metrics
