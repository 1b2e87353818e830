#include "srcattr/discovery.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "srcattr/rng.hpp"

namespace srcattr {

void Buffer::push(FeatureVector phi, Embedding psi, int step, int truth_id) {
    entries_.push_back(BufferEntry{std::move(phi), std::move(psi), step, truth_id});
    if (capacity_ && entries_.size() > *capacity_) {
        entries_.erase(entries_.begin());
    }
}

void Buffer::remove(std::vector<int> indices) {
    std::sort(indices.begin(), indices.end(), std::greater<>());
    for (const int idx : indices) {
        entries_.erase(entries_.begin() + idx);
    }
}

Eigen::MatrixXd Buffer::embeddings() const {
    if (entries_.empty()) return {};
    Eigen::MatrixXd out(static_cast<Eigen::Index>(entries_.size()), entries_.front().psi.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = entries_[i].psi.transpose();
    }
    return out;
}

bool Buffer::operator==(const Buffer& other) const {
    if (capacity_ != other.capacity_ || entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& a = entries_[i];
        const auto& b = other.entries_[i];
        if (a.step != b.step || a.truth_id != b.truth_id || a.phi != b.phi || a.psi != b.psi) {
            return false;
        }
    }
    return true;
}

DbscanResult dbscan(const Eigen::MatrixXd& points, double eps, int min_samples) {
    if (eps <= 0.0) throw ConfigError("eps must be positive");
    if (min_samples < 1) throw ConfigError("min_samples must be at least 1");

    const int n = static_cast<int>(points.rows());
    const double eps_sq = eps * eps;

    auto neighbors_of = [&](int p) {
        std::vector<int> out;
        for (int q = 0; q < n; ++q) {
            if ((points.row(p) - points.row(q)).squaredNorm() <= eps_sq) out.push_back(q);
        }
        return out;  // includes p itself
    };

    constexpr int kUndefined = -2;
    constexpr int kNoise = -1;
    std::vector<int> label(static_cast<std::size_t>(n), kUndefined);
    std::vector<std::vector<int>> clusters;

    for (int p = 0; p < n; ++p) {
        if (label[static_cast<std::size_t>(p)] != kUndefined) continue;
        const auto neighborhood = neighbors_of(p);
        if (static_cast<int>(neighborhood.size()) < min_samples) {
            label[static_cast<std::size_t>(p)] = kNoise;
            continue;
        }
        const int cid = static_cast<int>(clusters.size());
        clusters.emplace_back();
        label[static_cast<std::size_t>(p)] = cid;
        clusters.back().push_back(p);

        std::deque<int> frontier(neighborhood.begin(), neighborhood.end());
        while (!frontier.empty()) {
            const int q = frontier.front();
            frontier.pop_front();
            auto& tag = label[static_cast<std::size_t>(q)];
            if (tag == kNoise) {
                tag = cid;  // border point claimed by the first cluster to reach it
                clusters.back().push_back(q);
                continue;
            }
            if (tag != kUndefined) continue;
            tag = cid;
            clusters.back().push_back(q);
            const auto reach = neighbors_of(q);
            if (static_cast<int>(reach.size()) >= min_samples) {
                frontier.insert(frontier.end(), reach.begin(), reach.end());
            }
        }
    }

    DbscanResult result;
    result.clusters = std::move(clusters);
    for (auto& cluster : result.clusters) std::sort(cluster.begin(), cluster.end());
    for (int p = 0; p < n; ++p) {
        if (label[static_cast<std::size_t>(p)] == kNoise) result.noise.push_back(p);
    }
    return result;
}

std::optional<CandidateProposal> propose_candidate(const Buffer& buffer,
                                                   std::span<const ClusteringParams> schedule,
                                                   int sufficiency_threshold) {
    if (schedule.empty()) throw ConfigError("clustering schedule must not be empty");
    if (buffer.size() == 0) return std::nullopt;

    const Eigen::MatrixXd points = buffer.embeddings();
    for (const auto& params : schedule) {
        DbscanResult result = dbscan(points, params.eps, params.min_samples);
        // Size-ordered, ties toward the earlier-formed cluster.
        std::stable_sort(result.clusters.begin(), result.clusters.end(),
                         [](const auto& a, const auto& b) { return a.size() > b.size(); });
        if (result.clusters.empty() ||
            static_cast<int>(result.clusters.front().size()) <= sufficiency_threshold) {
            continue;
        }
        CandidateProposal proposal;
        proposal.candidate =
            CandidateCluster{result.clusters.front(), params.eps, params.min_samples};
        for (std::size_t i = 1; i < result.clusters.size(); ++i) {
            if (static_cast<int>(result.clusters[i].size()) > sufficiency_threshold) {
                proposal.alternatives.push_back(
                    CandidateCluster{result.clusters[i], params.eps, params.min_samples});
            }
        }
        return proposal;
    }
    return std::nullopt;
}

std::vector<std::vector<int>> cluster_kmeans(const Eigen::MatrixXd& points, int k,
                                             std::uint64_t seed) {
    const int n = static_cast<int>(points.rows());
    if (k < 1) throw ConfigError("k must be at least 1");
    if (n < k) throw CapacityError("need at least k points for k-means");

    Rng rng(seed);
    std::vector<Eigen::VectorXd> centers;
    {
        std::vector<Eigen::Index> seeds;
        seeds.push_back(static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n))));
        Eigen::VectorXd min_dist =
            (points.rowwise() - points.row(seeds.front())).rowwise().squaredNorm();
        while (static_cast<int>(seeds.size()) < k) {
            Eigen::Index best = 0;
            double best_dist = -1.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (min_dist[i] > best_dist) {
                    best_dist = min_dist[i];
                    best = i;
                }
            }
            seeds.push_back(best);
            min_dist = min_dist.cwiseMin(
                (points.rowwise() - points.row(best)).rowwise().squaredNorm());
        }
        for (const auto s : seeds) centers.push_back(points.row(s).transpose());
    }

    std::vector<int> assignment(static_cast<std::size_t>(n), -1);
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double best_dist = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                const double d =
                    (points.row(i).transpose() - centers[static_cast<std::size_t>(c)])
                        .squaredNorm();
                if (d < best_dist) {
                    best_dist = d;
                    best = c;
                }
            }
            if (assignment[static_cast<std::size_t>(i)] != best) {
                assignment[static_cast<std::size_t>(i)] = best;
                changed = true;
            }
        }
        if (!changed && iter > 0) break;

        for (int c = 0; c < k; ++c) {
            Eigen::VectorXd sum = Eigen::VectorXd::Zero(points.cols());
            int count = 0;
            for (int i = 0; i < n; ++i) {
                if (assignment[static_cast<std::size_t>(i)] == c) {
                    sum += points.row(i).transpose();
                    ++count;
                }
            }
            if (count > 0) {
                centers[static_cast<std::size_t>(c)] = sum / count;
            } else {
                // Re-seed from the point farthest from its assigned center.
                int farthest = 0;
                double farthest_dist = -1.0;
                for (int i = 0; i < n; ++i) {
                    const double d =
                        (points.row(i).transpose() -
                         centers[static_cast<std::size_t>(assignment[static_cast<std::size_t>(i)])])
                            .squaredNorm();
                    if (d > farthest_dist) {
                        farthest_dist = d;
                        farthest = i;
                    }
                }
                centers[static_cast<std::size_t>(c)] = points.row(farthest).transpose();
            }
        }
    }

    std::vector<std::vector<int>> clusters(static_cast<std::size_t>(k));
    for (int i = 0; i < n; ++i) {
        clusters[static_cast<std::size_t>(assignment[static_cast<std::size_t>(i)])].push_back(i);
    }
    return clusters;
}

std::vector<ClusteringParams> make_eps_schedule(double eps_min, double eps_max, int trials,
                                                int min_samples) {
    if (trials < 1) throw ConfigError("schedule needs at least one trial");
    if (eps_min <= 0.0 || eps_max < eps_min) throw ConfigError("bad eps range");
    std::vector<ClusteringParams> schedule;
    if (trials == 1) {
        schedule.push_back(ClusteringParams{eps_min, min_samples});
        return schedule;
    }
    for (int i = 0; i < trials; ++i) {
        const double eps = eps_min + (eps_max - eps_min) * i / (trials - 1);
        schedule.push_back(ClusteringParams{eps, min_samples});
    }
    return schedule;
}

}  // namespace srcattr
