#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

#include "srcattr/common.hpp"
#include "srcattr/feature_store.hpp"

namespace srcattr {

/// Gaussian mixture over embeddings for one source.
struct SourceModel {
    SourceLabel source;
    Eigen::VectorXd weights;                 // simplex over components
    std::vector<Eigen::VectorXd> means;      // one per component
    std::vector<Eigen::MatrixXd> covariances;

    int components() const { return static_cast<int>(means.size()); }
    int dim() const { return means.empty() ? 0 : static_cast<int>(means.front().size()); }
};

/// The open-set decision state: one model per source plus the global
/// rejection threshold on the best log-likelihood.
struct AttributorState {
    std::vector<SourceModel> models;  // kept sorted by source id
    double tau_reject = 0.0;
};

struct GmmFitConfig {
    double cov_epsilon = 1e-6;   // ridge added to every M-step covariance
    double tolerance = 1e-6;     // relative log-likelihood improvement
    int max_iterations = 200;
    int restarts = 1;
};

struct GmmFit {
    SourceModel model;
    std::vector<double> log_likelihood_trace;  // total data LL per EM iteration
    double final_log_likelihood = 0.0;
};

/// EM fit with farthest-point seeding; deterministic given seed. The best
/// of `restarts` runs (by final likelihood) wins.
GmmFit fit_gmm(const Eigen::MatrixXd& embeddings, int components, std::uint64_t seed,
               const GmmFitConfig& config = {});

/// Log of the mixture density, evaluated in log space. Underflow clamps to
/// the most negative finite double.
double log_likelihood(const SourceModel& model, const Embedding& psi);

/// Precomputed Cholesky factors for repeated scoring.
class GmmScorer {
public:
    explicit GmmScorer(const SourceModel& model);
    double log_likelihood(const Embedding& psi) const;

private:
    const SourceModel* model_;
    std::vector<Eigen::MatrixXd> chol_;      // lower factors
    std::vector<double> log_norm_;           // log pi_i - log sqrt((2 pi)^E det)
};

/// Scorer bank over a whole state; index order matches state.models.
class BankScorer {
public:
    explicit BankScorer(const AttributorState& state);

    /// Per-source log-likelihoods in model order.
    Eigen::VectorXd scores(const Embedding& psi) const;

    SourceLabel attribute(const Embedding& psi) const;
    double max_score(const Embedding& psi) const;

    /// log p(psi | real) - max over synthetic sources; detection uses the
    /// negation as "higher means more synthetic".
    double real_margin(const Embedding& psi) const;

private:
    const AttributorState* state_;
    std::vector<GmmScorer> scorers_;
    int real_index_ = -1;
};

/// Picks the candidate threshold (score set plus finite +/-infinity
/// surrogates) maximizing TPR - FPR, where a score s is rejected when
/// s < tau. Ties break toward the smaller threshold.
double select_threshold(std::span<const double> known_scores,
                        std::span<const double> unknown_scores);

/// Index of the largest value; ties break toward the smallest index.
int argmax_score(std::span<const double> scores);

/// Candidate-source argmax with rejection: the best source wins only when
/// its log-likelihood strictly exceeds tau_reject, otherwise the unknown
/// sentinel is returned.
SourceLabel attribute(const AttributorState& state, const Embedding& psi);

enum class Detection { Real, Synthetic };

/// Real iff attribute() lands on the real source; rejected samples count
/// as synthetic.
Detection detect(const AttributorState& state, const Embedding& psi);

/// Detection score for ROC sweeps: max synthetic log-likelihood minus the
/// real log-likelihood (higher = more synthetic).
double detection_score(const AttributorState& state, const Embedding& psi);

}  // namespace srcattr
