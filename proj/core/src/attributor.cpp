#include "srcattr/attributor.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "srcattr/rng.hpp"

namespace srcattr {

namespace {

constexpr double kLowestFinite = std::numeric_limits<double>::lowest();

double log_gaussian(const Eigen::MatrixXd& chol_lower, double log_norm,
                    const Eigen::VectorXd& mean, const Embedding& psi) {
    const Eigen::VectorXd whitened =
        chol_lower.triangularView<Eigen::Lower>().solve(psi - mean);
    return log_norm - 0.5 * whitened.squaredNorm();
}

double logsumexp(const Eigen::VectorXd& values) {
    const double peak = values.maxCoeff();
    if (!std::isfinite(peak)) return peak;
    return peak + std::log((values.array() - peak).exp().sum());
}

/// Cholesky with an escalating ridge; throws when the matrix cannot be
/// repaired with a ridge of up to 1e4 * epsilon.
Eigen::MatrixXd robust_cholesky(Eigen::MatrixXd& cov, double epsilon) {
    double ridge = epsilon;
    for (int attempt = 0; attempt < 5; ++attempt) {
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        if (llt.info() == Eigen::Success) return llt.matrixL();
        cov += ridge * Eigen::MatrixXd::Identity(cov.rows(), cov.cols());
        ridge *= 10.0;
    }
    throw ModelError("covariance not repairable by regularization");
}

struct EmRun {
    SourceModel model;
    std::vector<double> trace;
    double final_ll = kLowestFinite;
};

/// Farthest-point seeding: random first mean, then repeatedly the point
/// farthest from the chosen set (ties to the smallest index).
std::vector<Eigen::Index> farthest_point_seeds(const Eigen::MatrixXd& points, int count,
                                               std::uint64_t seed) {
    const Eigen::Index n = points.rows();
    Rng rng(seed);
    std::vector<Eigen::Index> seeds;
    seeds.push_back(static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n))));
    Eigen::VectorXd min_dist =
        (points.rowwise() - points.row(seeds.front())).rowwise().squaredNorm();
    while (static_cast<int>(seeds.size()) < count) {
        Eigen::Index best = 0;
        double best_dist = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (min_dist[i] > best_dist) {
                best_dist = min_dist[i];
                best = i;
            }
        }
        seeds.push_back(best);
        const Eigen::VectorXd dist =
            (points.rowwise() - points.row(best)).rowwise().squaredNorm();
        min_dist = min_dist.cwiseMin(dist);
    }
    return seeds;
}

EmRun run_em(const Eigen::MatrixXd& points, int components, std::uint64_t seed,
             const GmmFitConfig& config) {
    const Eigen::Index n = points.rows();
    const Eigen::Index dim = points.cols();

    EmRun run;
    SourceModel& model = run.model;
    model.weights = Eigen::VectorXd::Constant(components, 1.0 / components);

    const auto seeds = farthest_point_seeds(points, components, seed);
    const Eigen::RowVectorXd data_mean = points.colwise().mean();
    const Eigen::MatrixXd centered = points.rowwise() - data_mean;
    Eigen::MatrixXd pooled =
        centered.transpose() * centered / static_cast<double>(n) +
        config.cov_epsilon * Eigen::MatrixXd::Identity(dim, dim);
    for (int k = 0; k < components; ++k) {
        model.means.push_back(points.row(seeds[static_cast<std::size_t>(k)]).transpose());
        model.covariances.push_back(pooled);
    }

    Eigen::MatrixXd log_resp(n, components);

    // One E-step likelihood evaluation over the current parameters.
    auto evaluate = [&]() {
        std::vector<Eigen::MatrixXd> chol(static_cast<std::size_t>(components));
        std::vector<double> log_norm(static_cast<std::size_t>(components));
        for (int k = 0; k < components; ++k) {
            Eigen::MatrixXd cov = model.covariances[static_cast<std::size_t>(k)];
            chol[static_cast<std::size_t>(k)] = robust_cholesky(cov, config.cov_epsilon);
            model.covariances[static_cast<std::size_t>(k)] = cov;
            const double log_det =
                chol[static_cast<std::size_t>(k)].diagonal().array().log().sum();
            log_norm[static_cast<std::size_t>(k)] =
                std::log(model.weights[k]) -
                0.5 * dim * std::log(2.0 * std::numbers::pi) - log_det;
        }
        double ll = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::VectorXd row(components);
            for (int k = 0; k < components; ++k) {
                row[k] = log_gaussian(chol[static_cast<std::size_t>(k)],
                                      log_norm[static_cast<std::size_t>(k)],
                                      model.means[static_cast<std::size_t>(k)],
                                      points.row(i).transpose());
            }
            const double lse = logsumexp(row);
            ll += lse;
            log_resp.row(i) = (row.array() - lse).transpose();
        }
        return ll;
    };

    // The covariance ridge makes the M-step slightly inexact, so the final
    // iterate can score marginally below its predecessor; the stop rule
    // keeps whichever of the two is better.
    double previous_ll = kLowestFinite;
    SourceModel previous_model;
    for (int iter = 0; iter < config.max_iterations; ++iter) {
        const double ll = evaluate();
        if (iter > 0 && ll - previous_ll < config.tolerance * std::abs(previous_ll)) {
            if (ll >= previous_ll) {
                run.trace.push_back(ll);
                run.final_ll = ll;
            } else {
                model = previous_model;
                run.final_ll = previous_ll;
            }
            return run;
        }
        run.trace.push_back(ll);
        run.final_ll = ll;
        previous_ll = ll;
        previous_model = model;

        // M-step.
        const Eigen::MatrixXd resp = log_resp.array().exp();
        const Eigen::VectorXd counts = resp.colwise().sum();
        for (int k = 0; k < components; ++k) {
            const double nk = counts[k];
            if (nk <= 1e-12) {
                throw ModelError("mixture component starved during EM");
            }
            model.weights[k] = nk / static_cast<double>(n);
            const Eigen::VectorXd mean = points.transpose() * resp.col(k) / nk;
            const Eigen::MatrixXd diff = points.rowwise() - mean.transpose();
            Eigen::MatrixXd scatter =
                diff.transpose() * resp.col(k).asDiagonal() * diff / nk;
            scatter += config.cov_epsilon * Eigen::MatrixXd::Identity(dim, dim);
            model.means[static_cast<std::size_t>(k)] = mean;
            model.covariances[static_cast<std::size_t>(k)] = scatter;
        }
    }

    // Ran out of iterations: score the last M-step with the same guard.
    const double ll = evaluate();
    if (ll >= previous_ll) {
        run.trace.push_back(ll);
        run.final_ll = ll;
    } else {
        model = previous_model;
        run.final_ll = previous_ll;
    }
    return run;
}

}  // namespace

GmmFit fit_gmm(const Eigen::MatrixXd& embeddings, int components, std::uint64_t seed,
               const GmmFitConfig& config) {
    if (components < 1) throw ConfigError("component count must be at least 1");
    if (embeddings.rows() < components) {
        throw CapacityError("need at least " + std::to_string(components) +
                            " samples to fit " + std::to_string(components) +
                            " components, have " + std::to_string(embeddings.rows()));
    }
    if (config.restarts < 1) throw ConfigError("restarts must be at least 1");

    EmRun best;
    bool have_best = false;
    for (int r = 0; r < config.restarts; ++r) {
        EmRun run = run_em(embeddings, components, derive_seed(seed, "restart", r), config);
        if (!have_best || run.final_ll > best.final_ll) {
            best = std::move(run);
            have_best = true;
        }
    }
    GmmFit fit;
    fit.model = std::move(best.model);
    fit.log_likelihood_trace = std::move(best.trace);
    fit.final_log_likelihood = best.final_ll;
    return fit;
}

GmmScorer::GmmScorer(const SourceModel& model) : model_(&model) {
    for (int k = 0; k < model.components(); ++k) {
        Eigen::LLT<Eigen::MatrixXd> llt(model.covariances[static_cast<std::size_t>(k)]);
        if (llt.info() != Eigen::Success) {
            throw ModelError("source model covariance is not positive definite");
        }
        chol_.push_back(llt.matrixL());
        const double log_det = chol_.back().diagonal().array().log().sum();
        const double log_weight = model.weights[k] > 0.0
                                      ? std::log(model.weights[k])
                                      : -std::numeric_limits<double>::infinity();
        log_norm_.push_back(log_weight -
                            0.5 * model.dim() * std::log(2.0 * std::numbers::pi) - log_det);
    }
}

double GmmScorer::log_likelihood(const Embedding& psi) const {
    if (psi.size() != model_->dim()) {
        throw DimensionError("embedding dimension " + std::to_string(psi.size()) +
                             " does not match model dimension " +
                             std::to_string(model_->dim()));
    }
    Eigen::VectorXd terms(model_->components());
    for (int k = 0; k < model_->components(); ++k) {
        terms[k] = log_gaussian(chol_[static_cast<std::size_t>(k)],
                                log_norm_[static_cast<std::size_t>(k)],
                                model_->means[static_cast<std::size_t>(k)], psi);
    }
    const double ll = logsumexp(terms);
    return std::isfinite(ll) ? ll : kLowestFinite;
}

double log_likelihood(const SourceModel& model, const Embedding& psi) {
    return GmmScorer(model).log_likelihood(psi);
}

BankScorer::BankScorer(const AttributorState& state) : state_(&state) {
    if (state.models.empty()) throw ConfigError("attributor state has no source models");
    scorers_.reserve(state.models.size());
    for (std::size_t i = 0; i < state.models.size(); ++i) {
        scorers_.emplace_back(state.models[i]);
        if (state.models[i].source.kind == SourceKind::Real) {
            real_index_ = static_cast<int>(i);
        }
    }
}

Eigen::VectorXd BankScorer::scores(const Embedding& psi) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(scorers_.size()));
    for (std::size_t i = 0; i < scorers_.size(); ++i) {
        out[static_cast<Eigen::Index>(i)] = scorers_[i].log_likelihood(psi);
    }
    return out;
}

SourceLabel BankScorer::attribute(const Embedding& psi) const {
    const Eigen::VectorXd lls = scores(psi);
    const int best = argmax_score({lls.data(), static_cast<std::size_t>(lls.size())});
    if (lls[best] > state_->tau_reject) {
        return state_->models[static_cast<std::size_t>(best)].source;
    }
    return unknown_label();
}

double BankScorer::max_score(const Embedding& psi) const {
    return scores(psi).maxCoeff();
}

double BankScorer::real_margin(const Embedding& psi) const {
    if (real_index_ < 0) {
        throw ConfigError("attributor state lacks a real-source model");
    }
    if (scorers_.size() == 1) {
        throw ConfigError("detection needs at least one synthetic source model");
    }
    const Eigen::VectorXd lls = scores(psi);
    double best_synth = kLowestFinite;
    for (Eigen::Index i = 0; i < lls.size(); ++i) {
        if (static_cast<int>(i) == real_index_) continue;
        best_synth = std::max(best_synth, lls[i]);
    }
    return lls[real_index_] - best_synth;
}

double select_threshold(std::span<const double> known_scores,
                        std::span<const double> unknown_scores) {
    if (known_scores.empty() || unknown_scores.empty()) {
        throw CapacityError("threshold selection needs both score populations");
    }
    std::vector<double> known(known_scores.begin(), known_scores.end());
    std::vector<double> unknown(unknown_scores.begin(), unknown_scores.end());
    std::sort(known.begin(), known.end());
    std::sort(unknown.begin(), unknown.end());

    std::vector<double> candidates;
    candidates.push_back(kLowestFinite);
    candidates.insert(candidates.end(), known.begin(), known.end());
    candidates.insert(candidates.end(), unknown.begin(), unknown.end());
    candidates.push_back(std::numeric_limits<double>::max());
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    // A score s is rejected when s < tau.
    auto rejected_below = [](const std::vector<double>& scores, double tau) {
        return static_cast<double>(
            std::lower_bound(scores.begin(), scores.end(), tau) - scores.begin());
    };

    double best_tau = candidates.front();
    double best_objective = -std::numeric_limits<double>::infinity();
    for (const double tau : candidates) {
        const double tpr = rejected_below(unknown, tau) / static_cast<double>(unknown.size());
        const double fpr = rejected_below(known, tau) / static_cast<double>(known.size());
        const double objective = tpr - fpr;
        if (objective > best_objective) {
            best_objective = objective;
            best_tau = tau;
        }
    }
    return best_tau;
}

int argmax_score(std::span<const double> scores) {
    if (scores.empty()) throw CapacityError("argmax over empty score list");
    int best = 0;
    for (int i = 1; i < static_cast<int>(scores.size()); ++i) {
        if (scores[static_cast<std::size_t>(i)] > scores[static_cast<std::size_t>(best)]) {
            best = i;
        }
    }
    return best;
}

SourceLabel attribute(const AttributorState& state, const Embedding& psi) {
    return BankScorer(state).attribute(psi);
}

Detection detect(const AttributorState& state, const Embedding& psi) {
    const bool has_real = std::any_of(state.models.begin(), state.models.end(), [](const auto& m) {
        return m.source.kind == SourceKind::Real;
    });
    if (!has_real) throw ConfigError("attributor state lacks a real-source model");
    const SourceLabel label = BankScorer(state).attribute(psi);
    return label.kind == SourceKind::Real ? Detection::Real : Detection::Synthetic;
}

double detection_score(const AttributorState& state, const Embedding& psi) {
    return -BankScorer(state).real_margin(psi);
}

}  // namespace srcattr
