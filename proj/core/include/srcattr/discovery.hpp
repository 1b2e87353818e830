#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "srcattr/common.hpp"
#include "srcattr/feature_store.hpp"

namespace srcattr {

/// One rejected sample. `truth_id` is provenance for the metrics/audit
/// path only; no discovery or adaptation decision reads it.
struct BufferEntry {
    FeatureVector phi;
    Embedding psi;
    int step = 0;
    int truth_id = kUnknownSourceId;
};

/// FIFO store of rejected samples. With a capacity set, the oldest entry
/// is evicted once the capacity is exceeded.
class Buffer {
public:
    Buffer() = default;
    explicit Buffer(std::size_t capacity) : capacity_(capacity) {}

    void push(FeatureVector phi, Embedding psi, int step, int truth_id = kUnknownSourceId);

    const std::vector<BufferEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    std::optional<std::size_t> capacity() const { return capacity_; }

    /// Removes the given entry indices (e.g. an accepted cluster).
    void remove(std::vector<int> indices);
    void clear() { entries_.clear(); }

    /// Embeddings as rows, in arrival order.
    Eigen::MatrixXd embeddings() const;

    bool operator==(const Buffer& other) const;

private:
    std::vector<BufferEntry> entries_;
    std::optional<std::size_t> capacity_;
};

struct DbscanResult {
    std::vector<std::vector<int>> clusters;  // formation order, members ascending
    std::vector<int> noise;
};

/// Euclidean DBSCAN. A core point has at least min_samples neighbors
/// within eps, counting itself; border points join the first core cluster
/// that reaches them in ascending-index scan order.
DbscanResult dbscan(const Eigen::MatrixXd& points, double eps, int min_samples);

struct CandidateCluster {
    std::vector<int> members;  // indices into the buffer
    double eps = 0.0;
    int min_samples = 0;

    int size() const { return static_cast<int>(members.size()); }
};

struct CandidateProposal {
    CandidateCluster candidate;
    std::vector<CandidateCluster> alternatives;  // remaining sufficient clusters, large first
};

struct ClusteringParams {
    double eps = 0.0;
    int min_samples = 0;
};

/// Walks the (eps, min_samples) schedule; for the first entry whose
/// largest cluster exceeds the sufficiency threshold, returns that cluster
/// plus the remaining sufficient clusters as fallbacks.
std::optional<CandidateProposal> propose_candidate(const Buffer& buffer,
                                                   std::span<const ClusteringParams> schedule,
                                                   int sufficiency_threshold);

/// Lloyd's algorithm with farthest-point seeding; an emptied cluster is
/// re-seeded from the point farthest from its assigned center.
std::vector<std::vector<int>> cluster_kmeans(const Eigen::MatrixXd& points, int k,
                                             std::uint64_t seed);

/// Evenly spaced eps values, ascending, paired with one min_samples.
std::vector<ClusteringParams> make_eps_schedule(double eps_min, double eps_max, int trials,
                                                int min_samples);

}  // namespace srcattr
