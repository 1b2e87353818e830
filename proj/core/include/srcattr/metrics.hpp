#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "srcattr/common.hpp"
#include "srcattr/feature_store.hpp"

namespace srcattr {

/// One scored attribution decision. `predicted` is the system's output
/// with discovered labels already resolved to the true source they map to;
/// `score` follows the higher-means-more-synthetic convention.
struct EvalRecord {
    SourceLabel truth;
    SourceLabel predicted;
    double score = 0.0;
    int step = 0;
};

/// Fraction of records whose real-vs-synthetic call matches the truth.
double detection_accuracy(std::span<const EvalRecord> records);

/// Mann-Whitney AUC: probability that a random synthetic sample outranks a
/// random real one, ties counted 1/2.
double roc_auc(std::span<const std::pair<double, bool>> scored);

enum class AttributionScope { KnownOnly, NewOnly, All };

/// Fraction of in-scope records with predicted id == true id. `new_ids`
/// identifies the emerging sources for the scoped variants.
double attribution_accuracy(std::span<const EvalRecord> records, AttributionScope scope,
                            const std::set<int>& new_ids = {});

/// Area under the correct-rejection-rate curve, swept over thresholds and
/// plotted against the known-sample acceptance rate. A score s is rejected
/// at threshold t when s < t.
double au_crr(std::span<const double> known_scores, std::span<const double> unknown_scores);

struct OscrSample {
    double score = 0.0;   // max-over-sources log-likelihood
    bool unknown = false;
    bool correct = false;  // attribution correctness; meaningful for knowns
};

/// Area under the open-set classification-rate curve: correct
/// classification rate of knowns vs false acceptance rate of unknowns.
double au_oscr(std::span<const OscrSample> samples);

struct StepMetrics {
    int step = 0;
    double det_acc = 0.0;
    double det_auc = 0.0;
    double att_acc = 0.0;        // over every source introduced so far
    double att_acc_known = 0.0;  // over the initial known sources
    std::optional<double> new_det_acc;
    std::optional<double> new_det_auc;
    std::optional<double> new_att_acc;
};

struct MetricTriple {
    double det_acc = 0.0;
    double det_auc = 0.0;
    double att_acc = 0.0;
};

struct SummaryTable {
    MetricTriple initial;
    std::optional<MetricTriple> average_new;  // absent when no source was introduced
    MetricTriple final;
};

/// Collapses per-step rows into the initial / average-over-new / final
/// column groups.
SummaryTable aggregate(std::span<const StepMetrics> rows);

void write_step_metrics(const std::filesystem::path& path, const StepMetrics& row);
StepMetrics read_step_metrics(const std::filesystem::path& path);
void write_summary(const std::filesystem::path& path, const SummaryTable& table);

}  // namespace srcattr
