#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "srcattr/adaptation.hpp"
#include "srcattr/config.hpp"
#include "srcattr/metrics.hpp"

namespace srcattr {

/// Loaded scenario: merged known-source dataset plus the emerging sources
/// in introduction order.
struct ScenarioData {
    SourceManifest manifest;
    LabeledDataset known;
    std::vector<LabeledDataset> emerging;
    std::map<int, LabeledDataset> test_by_source;
};

/// Deterministic stand-in scenario: well-separated Gaussian-mixture
/// sources, id 0 real, then known synthetics, then emerging ones.
SourceManifest build_default_manifest(const DataConfig& data, std::uint64_t seed);

/// Writes manifest.json plus one dataset CSV per source under
/// `<output_root>/<data.data_dir>`. Returns the data directory.
std::filesystem::path gen_data(const ExperimentConfig& config,
                               const std::filesystem::path& output_root);

ScenarioData load_scenario(const ExperimentConfig& config,
                           const std::filesystem::path& output_root);

struct SequentialResult {
    std::vector<StepMetrics> steps;
    SummaryTable summary;
    std::filesystem::path run_dir;
    std::map<int, int> discovered_to_truth;
    int commits = 0;
};

/// The sequential-adaptation experiment: initialize on the known sources,
/// then walk the observation stream one emerging source per step, writing
/// per-step metrics, the audit log, snapshots and the summary table.
SequentialResult run_sequential(const ExperimentConfig& config,
                                const std::filesystem::path& output_root,
                                const std::string& run_name = "");

struct IndividualRow {
    int source_id = kUnknownSourceId;
    double det_acc = 0.0;
    double det_auc = 0.0;
    double att_acc = 0.0;
};

struct IndividualResult {
    std::vector<IndividualRow> rows;  // one per emerging source, then the average
    std::filesystem::path run_dir;
};

/// Adapts to each emerging source in isolation, resetting to the initial
/// state in between. `skip_validation` commits the best candidate without
/// running the gate.
IndividualResult run_individual(const ExperimentConfig& config,
                                const std::filesystem::path& output_root,
                                bool skip_validation = false);

inline constexpr const char* kAblationVariants[] = {
    "proposed",      "kmeans",      "no_preservation", "overly_preserved",
    "no_validate",   "no_new_crit", "no_det_crit",     "no_att_crit",
};

struct AblationRow {
    std::string variant;
    double det_acc = 0.0;
    double att_acc = 0.0;
};

/// Applies one named variant to the configuration.
ExperimentConfig apply_variant(const ExperimentConfig& config, const std::string& variant);

/// Runs the sequential experiment under the variant and reports the final
/// detection / attribution accuracies.
AblationRow run_ablation(const ExperimentConfig& config,
                         const std::filesystem::path& output_root,
                         const std::string& variant);

/// Deterministic 2-D linear projection (top two principal components) of a
/// state snapshot's embeddings.csv; writes projection.csv next to it.
std::filesystem::path project_snapshot(const std::filesystem::path& snapshot_dir);

/// Rebuilds the summary table from the per-step metrics CSVs of a run.
SummaryTable report_from_run(const std::filesystem::path& run_dir);

}  // namespace srcattr
