#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "srcattr/attributor.hpp"
#include "srcattr/common.hpp"
#include "srcattr/discovery.hpp"
#include "srcattr/embedder.hpp"
#include "srcattr/feature_store.hpp"

namespace srcattr {

enum class BufferPolicy {
    RetainOthers,  // drop only the accepted cluster's entries
    ClearAll,      // empty the buffer after an accepted update
};

struct AdaptationConfig {
    EmbedderArch arch;
    TrainConfig train;
    int gmm_components = 5;
    GmmFitConfig gmm;
    double candidate_split = 0.75;  // train share of an accepted cluster
    bool warm_start = true;
    bool validate_updates = true;
    BufferPolicy buffer_policy = BufferPolicy::RetainOthers;
};

struct ValidationCriteria {
    double min_att_known = 0.8;   // attribution accuracy on prior sources
    double min_detection = 0.95;  // detection accuracy on prior sources
    double min_att_new = 0.65;    // attribution accuracy on the new source
};

struct ValidationMeasurements {
    double detection_accuracy = 0.0;
    double attribution_known = 0.0;
    double attribution_new = 0.0;
};

enum class UpdateOutcome { Accepted, RejectedValidation, RejectedInsufficient, NoCandidate };

std::string to_string(UpdateOutcome outcome);

struct CandidateMeta {
    int size = 0;
    double eps = 0.0;
    int min_samples = 0;
    int provisional_id = kUnknownSourceId;
    int majority_truth = kUnknownSourceId;  // metrics-path provenance
    double purity = 0.0;                    // majority-truth fraction
};

struct UpdateReport {
    int step = 0;
    UpdateOutcome outcome = UpdateOutcome::NoCandidate;
    std::optional<ValidationMeasurements> measured;  // present iff a trial was built
    std::optional<CandidateMeta> candidate;
    double duration_seconds = 0.0;  // not serialized; wall-clock is not reproducible
};

/// Full system snapshot at update step `step`. Value semantics: copies are
/// deep and independent, which is what the trial/commit protocol relies on.
struct SystemState {
    int step = 0;
    std::vector<SourceLabel> sources;  // ascending id
    LabeledDataset train_ledger;
    LabeledDataset val_ledger;
    EmbedderParams embedder;
    AttributorState attributor;
    Buffer buffer;
    int next_discovered_id = 0;

    // Set on trials produced by experimental_update; cleared by commit.
    std::optional<SourceLabel> pending_new;
    std::optional<CandidateCluster> pending_candidate;
};

/// Trains the initial embedder and fits the source models from a dataset
/// of known sources (train and val splits populated per source).
SystemState initialize_state(const LabeledDataset& known, const AdaptationConfig& config,
                             std::uint64_t seed);

/// Refits every per-source GMM on re-embedded train data and reselects the
/// rejection threshold from the val ledger. Exposed for reuse; callers
/// normally go through initialize_state / experimental_update.
void rebuild_models(SystemState& state, const AdaptationConfig& config, std::uint64_t seed);

/// Builds a fully independent trial state: provisional label assigned, the
/// candidate cluster split into train/val shares and merged into the
/// ledgers, embedder retrained, models refit, threshold reselected. The
/// input state is never modified.
SystemState experimental_update(const SystemState& state, const CandidateCluster& candidate,
                                double split_ratio, const AdaptationConfig& config,
                                std::uint64_t seed);

/// Measures the three gate quantities on the trial's validation data.
std::pair<bool, ValidationMeasurements> validate(const SystemState& trial,
                                                 const ValidationCriteria& criteria);

/// Promotes a trial to the authoritative state: step increments and the
/// accepted cluster leaves the buffer (policy-dependent).
SystemState commit(const SystemState& trial, BufferPolicy policy);

/// Discards the trial; returns the original state unchanged.
SystemState revert(const SystemState& state, const SystemState& trial);

struct CycleResult {
    SystemState state;
    std::vector<UpdateReport> reports;
    int rejected_to_buffer = 0;  // batch items pushed as unknown
};

/// One observation step: attribute the batch (pushing rejections into the
/// buffer), then try to discover and integrate at most one new source.
/// `truth_ids` is metrics-path provenance for the buffer; decisions never
/// read it. Trial-build failures surface as rejection reports, not errors.
CycleResult run_cycle(SystemState state, const Eigen::MatrixXd& batch,
                      std::span<const int> truth_ids, const ValidationCriteria& criteria,
                      std::span<const ClusteringParams> schedule, int sufficiency_threshold,
                      const AdaptationConfig& config, std::uint64_t seed,
                      bool use_kmeans = false, int kmeans_k = 5);

/// FNV-1a over a canonical serialization; used to assert state isolation.
std::uint64_t state_fingerprint(const SystemState& state);

}  // namespace srcattr
