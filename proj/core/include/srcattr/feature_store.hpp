#pragma once

#include <Eigen/Dense>

#include <compare>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "srcattr/common.hpp"

namespace srcattr {

/// Feature vector describing one media item; the raw space everything
/// else is built on. Embeddings live in the encoder's output space.
using FeatureVector = Eigen::VectorXd;
using Embedding = Eigen::VectorXd;

enum class SourceKind {
    Real,                 // camera-originated content
    SyntheticKnown,       // generator known since initialization
    SyntheticDiscovered,  // generator the system discovered on its own
    Unknown,              // the rejection sentinel; never part of the source set
};

struct SourceLabel {
    int id = 0;
    SourceKind kind = SourceKind::SyntheticKnown;

    bool operator==(const SourceLabel&) const = default;
};

inline constexpr int kUnknownSourceId = -1;

/// The sentinel returned when no known source claims a sample.
inline SourceLabel unknown_label() {
    return SourceLabel{kUnknownSourceId, SourceKind::Unknown};
}

enum class Split { Train, Val, Observation, Test };

std::string to_string(Split split);
Split split_from_string(const std::string& text);

std::string to_string(SourceKind kind);
SourceKind source_kind_from_string(const std::string& text);

/// Row-aligned collection of (feature vector, source label, split tag).
struct LabeledDataset {
    Eigen::MatrixXd features;  // one row per item
    std::vector<SourceLabel> labels;
    std::vector<Split> splits;

    Eigen::Index size() const { return features.rows(); }
    Eigen::Index dim() const { return features.cols(); }

    void append(const LabeledDataset& other);
    void append_row(const Eigen::VectorXd& row, SourceLabel label, Split split);

    LabeledDataset subset(Split split) const;
    LabeledDataset subset_by_source(int source_id) const;

    /// Distinct source ids in ascending order.
    std::vector<int> source_ids() const;
};

/// Ground-truth mixture that stands in for one media source.
struct SyntheticSourceSpec {
    SourceLabel label;
    bool emerging = false;
    std::vector<Eigen::VectorXd> means;
    std::vector<Eigen::MatrixXd> covariances;
    Eigen::VectorXd weights;
    std::uint64_t seed = 0;

    int dim() const { return means.empty() ? 0 : static_cast<int>(means.front().size()); }

    /// Checks the simplex and SPD invariants; throws ModelError on failure.
    void validate() const;
};

struct SourceManifest {
    int dimension = 0;
    std::vector<SyntheticSourceSpec> sources;

    std::vector<SyntheticSourceSpec> known() const;
    std::vector<SyntheticSourceSpec> emerging() const;
};

/// One step of the simulated deployment feed. `truth` is bookkeeping for
/// the metrics path only; attribution code must never look at it.
struct StreamStep {
    Eigen::MatrixXd features;
    std::vector<SourceLabel> truth;
    int introduced_source = kUnknownSourceId;
};

struct ObservationStream {
    std::vector<StreamStep> steps;
};

struct SplitCounts {
    Eigen::Index train = 0;
    Eigen::Index val = 0;
    Eigen::Index observation = 0;
    Eigen::Index test = 0;

    Eigen::Index total() const { return train + val + observation + test; }
};

/// Reads a dataset CSV (header `f0..f{D-1},label,split`). Row order is
/// preserved. Label 0 is the real source; other ids are synthetic.
LabeledDataset load_features(const std::filesystem::path& path);

/// Writes the same CSV format; floats are shortest-round-trip encoded.
void write_features(const std::filesystem::path& path, const LabeledDataset& dataset);

/// Deterministic shuffle by seed, then partition into the four split
/// subsets with exactly the requested sizes.
LabeledDataset split_source(const Eigen::MatrixXd& items, SourceLabel label,
                            const SplitCounts& counts, std::uint64_t seed);

/// Draws n samples from the spec's mixture; deterministic given spec.seed.
Eigen::MatrixXd synthesize_source(const SyntheticSourceSpec& spec, Eigen::Index n);

/// Builds the observation stream: step 0 carries initialization metadata
/// only; step l >= 1 is a shuffled union of the known observation subset
/// and the l-th emerging source's observation subset.
ObservationStream build_stream(const LabeledDataset& known,
                               const std::vector<LabeledDataset>& emerging,
                               std::uint64_t seed);

SourceManifest load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const SourceManifest& manifest);

}  // namespace srcattr
