#include "srcattr/adaptation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

#include "srcattr/rng.hpp"
#include "srcattr/serialization.hpp"

namespace srcattr {

namespace {

std::vector<double> scores_for_val(const SystemState& state, const BankScorer& scorer,
                                   std::vector<double>& proxy_scores) {
    // Known score: best log-likelihood over all sources. Unknown proxy: best
    // over the sources the sample does not belong to, standing in for the
    // unavailable unknown population.
    std::vector<double> known_scores;
    const LabeledDataset& val = state.val_ledger;
    const Eigen::MatrixXd psi = encode_batch(state.embedder, val.features);
    for (Eigen::Index i = 0; i < val.size(); ++i) {
        const Eigen::VectorXd lls = scorer.scores(psi.row(i).transpose());
        double best = std::numeric_limits<double>::lowest();
        double best_other = std::numeric_limits<double>::lowest();
        for (Eigen::Index m = 0; m < lls.size(); ++m) {
            best = std::max(best, lls[m]);
            if (state.attributor.models[static_cast<std::size_t>(m)].source.id !=
                val.labels[static_cast<std::size_t>(i)].id) {
                best_other = std::max(best_other, lls[m]);
            }
        }
        known_scores.push_back(best);
        proxy_scores.push_back(best_other);
    }
    return known_scores;
}

void sort_models(AttributorState& state) {
    std::sort(state.models.begin(), state.models.end(),
              [](const SourceModel& a, const SourceModel& b) { return a.source.id < b.source.id; });
}

CandidateMeta make_meta(const SystemState& state, const CandidateCluster& candidate,
                        int provisional_id) {
    CandidateMeta meta;
    meta.size = candidate.size();
    meta.eps = candidate.eps;
    meta.min_samples = candidate.min_samples;
    meta.provisional_id = provisional_id;

    std::map<int, int> counts;
    for (const int idx : candidate.members) {
        ++counts[state.buffer.entries()[static_cast<std::size_t>(idx)].truth_id];
    }
    int best_count = 0;
    for (const auto& [truth, count] : counts) {
        if (count > best_count) {
            best_count = count;
            meta.majority_truth = truth;
        }
    }
    meta.purity = candidate.size() > 0
                      ? static_cast<double>(best_count) / static_cast<double>(candidate.size())
                      : 0.0;
    return meta;
}

}  // namespace

std::string to_string(UpdateOutcome outcome) {
    switch (outcome) {
        case UpdateOutcome::Accepted: return "accepted";
        case UpdateOutcome::RejectedValidation: return "rejected-validation";
        case UpdateOutcome::RejectedInsufficient: return "rejected-insufficient";
        case UpdateOutcome::NoCandidate: return "no-candidate";
    }
    throw ConfigError("unhandled update outcome");
}

void rebuild_models(SystemState& state, const AdaptationConfig& config, std::uint64_t seed) {
    AttributorState bank;
    const Eigen::MatrixXd train_psi = encode_batch(state.embedder, state.train_ledger.features);
    for (const SourceLabel& source : state.sources) {
        std::vector<Eigen::Index> rows;
        for (Eigen::Index i = 0; i < state.train_ledger.size(); ++i) {
            if (state.train_ledger.labels[static_cast<std::size_t>(i)].id == source.id) {
                rows.push_back(i);
            }
        }
        Eigen::MatrixXd psi(static_cast<Eigen::Index>(rows.size()), train_psi.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            psi.row(static_cast<Eigen::Index>(i)) = train_psi.row(rows[i]);
        }
        GmmFit fit = fit_gmm(psi, config.gmm_components,
                             derive_seed(seed, "gmm", static_cast<std::uint64_t>(source.id)),
                             config.gmm);
        fit.model.source = source;
        bank.models.push_back(std::move(fit.model));
    }
    sort_models(bank);
    bank.tau_reject = 0.0;
    state.attributor = std::move(bank);

    BankScorer scorer(state.attributor);
    std::vector<double> proxy_scores;
    const std::vector<double> known_scores = scores_for_val(state, scorer, proxy_scores);
    state.attributor.tau_reject = select_threshold(known_scores, proxy_scores);
}

SystemState initialize_state(const LabeledDataset& known, const AdaptationConfig& config,
                             std::uint64_t seed) {
    SystemState state;
    state.step = 0;
    state.train_ledger = known.subset(Split::Train);
    state.val_ledger = known.subset(Split::Val);
    if (state.train_ledger.size() == 0 || state.val_ledger.size() == 0) {
        throw CapacityError("initialization needs non-empty train and val splits");
    }

    std::map<int, SourceLabel> by_id;
    for (const auto& label : known.labels) by_id[label.id] = label;
    for (const auto& [id, label] : by_id) state.sources.push_back(label);
    state.next_discovered_id =
        by_id.empty() ? 0 : by_id.rbegin()->first + 1;

    LabeledDataset train_val = state.train_ledger;
    train_val.append(state.val_ledger);
    TrainConfig train_cfg = config.train;
    train_cfg.seed = derive_seed(seed, "embedder");
    state.embedder = train(train_val, config.arch, train_cfg).params;

    rebuild_models(state, config, derive_seed(seed, "models"));
    return state;
}

SystemState experimental_update(const SystemState& state, const CandidateCluster& candidate,
                                double split_ratio, const AdaptationConfig& config,
                                std::uint64_t seed) {
    if (candidate.members.empty()) {
        throw CapacityError("candidate cluster is empty");
    }
    if (split_ratio <= 0.0 || split_ratio >= 1.0) {
        throw ConfigError("candidate split ratio must lie in (0, 1)");
    }

    SystemState trial = state;
    const SourceLabel provisional{state.next_discovered_id, SourceKind::SyntheticDiscovered};
    trial.pending_new = provisional;
    trial.pending_candidate = candidate;
    trial.sources.push_back(provisional);
    trial.next_discovered_id = provisional.id + 1;

    // Split the cluster into train/val shares.
    std::vector<int> members = candidate.members;
    const auto order = shuffled_indices(members.size(), derive_seed(seed, "candidate-split"));
    const auto n_train = static_cast<std::size_t>(
        std::floor(split_ratio * static_cast<double>(members.size()) + 0.5));
    if (n_train == 0 || n_train == members.size()) {
        throw CapacityError("candidate too small to split into train and val shares");
    }
    for (std::size_t i = 0; i < members.size(); ++i) {
        const auto& entry = state.buffer.entries()[static_cast<std::size_t>(members[order[i]])];
        const Split split = i < n_train ? Split::Train : Split::Val;
        if (split == Split::Train) {
            trial.train_ledger.append_row(entry.phi, provisional, Split::Train);
        } else {
            trial.val_ledger.append_row(entry.phi, provisional, Split::Val);
        }
    }

    LabeledDataset train_val = trial.train_ledger;
    train_val.append(trial.val_ledger);
    TrainConfig train_cfg = config.train;
    train_cfg.seed = derive_seed(seed, "embedder");
    trial.embedder = train(train_val, config.arch, train_cfg,
                           config.warm_start ? &state.embedder : nullptr)
                         .params;

    rebuild_models(trial, config, derive_seed(seed, "models"));
    return trial;
}

std::pair<bool, ValidationMeasurements> validate(const SystemState& trial,
                                                 const ValidationCriteria& criteria) {
    if (!trial.pending_new) {
        throw ConfigError("validate expects a trial produced by experimental_update");
    }
    const int new_id = trial.pending_new->id;

    LabeledDataset prior_val;
    LabeledDataset new_val;
    for (Eigen::Index i = 0; i < trial.val_ledger.size(); ++i) {
        const auto& label = trial.val_ledger.labels[static_cast<std::size_t>(i)];
        auto& target = label.id == new_id ? new_val : prior_val;
        target.append_row(trial.val_ledger.features.row(i), label,
                          trial.val_ledger.splits[static_cast<std::size_t>(i)]);
    }
    if (prior_val.size() == 0 || new_val.size() == 0) {
        throw CapacityError("validation subsets are empty; update cannot be validated");
    }

    BankScorer scorer(trial.attributor);
    ValidationMeasurements m;

    std::size_t det_correct = 0;
    std::size_t att_correct = 0;
    const Eigen::MatrixXd prior_psi = encode_batch(trial.embedder, prior_val.features);
    for (Eigen::Index i = 0; i < prior_val.size(); ++i) {
        const Embedding psi = prior_psi.row(i).transpose();
        const SourceLabel predicted = scorer.attribute(psi);
        const auto& truth = prior_val.labels[static_cast<std::size_t>(i)];
        if ((predicted.kind == SourceKind::Real) == (truth.kind == SourceKind::Real)) {
            ++det_correct;
        }
        if (predicted.id == truth.id) ++att_correct;
    }
    m.detection_accuracy = static_cast<double>(det_correct) / prior_val.size();
    m.attribution_known = static_cast<double>(att_correct) / prior_val.size();

    std::size_t new_correct = 0;
    const Eigen::MatrixXd new_psi = encode_batch(trial.embedder, new_val.features);
    for (Eigen::Index i = 0; i < new_val.size(); ++i) {
        if (scorer.attribute(new_psi.row(i).transpose()).id == new_id) ++new_correct;
    }
    m.attribution_new = static_cast<double>(new_correct) / new_val.size();

    const bool pass = m.detection_accuracy >= criteria.min_detection &&
                      m.attribution_known >= criteria.min_att_known &&
                      m.attribution_new >= criteria.min_att_new;
    return {pass, m};
}

SystemState commit(const SystemState& trial, BufferPolicy policy) {
    if (!trial.pending_new || !trial.pending_candidate) {
        throw ConfigError("commit expects a trial produced by experimental_update");
    }
    SystemState next = trial;
    next.step = trial.step + 1;
    if (policy == BufferPolicy::ClearAll) {
        next.buffer.clear();
    } else {
        next.buffer.remove(trial.pending_candidate->members);
    }
    next.pending_new.reset();
    next.pending_candidate.reset();
    return next;
}

SystemState revert(const SystemState& state, const SystemState& trial) {
    (void)trial;  // the trial is discarded by construction
    return state;
}

CycleResult run_cycle(SystemState state, const Eigen::MatrixXd& batch,
                      std::span<const int> truth_ids, const ValidationCriteria& criteria,
                      std::span<const ClusteringParams> schedule, int sufficiency_threshold,
                      const AdaptationConfig& config, std::uint64_t seed, bool use_kmeans,
                      int kmeans_k) {
    CycleResult result;

    // Attribution pass: rejected samples land in the buffer.
    if (batch.rows() > 0) {
        BankScorer scorer(state.attributor);
        const Eigen::MatrixXd psi = encode_batch(state.embedder, batch);
        for (Eigen::Index i = 0; i < batch.rows(); ++i) {
            const Embedding embedding = psi.row(i).transpose();
            if (scorer.attribute(embedding).kind == SourceKind::Unknown) {
                const int truth = truth_ids.empty()
                                      ? kUnknownSourceId
                                      : truth_ids[static_cast<std::size_t>(i)];
                state.buffer.push(batch.row(i).transpose(), embedding, state.step, truth);
                ++result.rejected_to_buffer;
            }
        }
    }

    // Discovery gate: only once enough rejected samples accumulated.
    if (static_cast<int>(state.buffer.size()) < sufficiency_threshold || schedule.empty()) {
        result.state = std::move(state);
        return result;
    }

    bool committed = false;
    int attempt = 0;
    for (std::size_t entry = 0; entry < schedule.size() && !committed; ++entry) {
        std::optional<CandidateProposal> proposal;
        if (use_kmeans) {
            // Ablation path: k-means has no noise notion, so every cluster
            // competes; only the first schedule entry is meaningful.
            if (entry > 0) break;
            auto clusters = cluster_kmeans(state.buffer.embeddings(), kmeans_k,
                                           derive_seed(seed, "kmeans"));
            std::stable_sort(clusters.begin(), clusters.end(),
                             [](const auto& a, const auto& b) { return a.size() > b.size(); });
            if (!clusters.empty() &&
                static_cast<int>(clusters.front().size()) > sufficiency_threshold) {
                CandidateProposal p;
                p.candidate = CandidateCluster{clusters.front(), 0.0, kmeans_k};
                for (std::size_t i = 1; i < clusters.size(); ++i) {
                    if (static_cast<int>(clusters[i].size()) > sufficiency_threshold) {
                        p.alternatives.push_back(CandidateCluster{clusters[i], 0.0, kmeans_k});
                    }
                }
                proposal = std::move(p);
            }
        } else {
            proposal = propose_candidate(state.buffer, schedule.subspan(entry, 1),
                                         sufficiency_threshold);
        }
        if (!proposal) continue;

        std::vector<CandidateCluster> queue;
        queue.push_back(proposal->candidate);
        queue.insert(queue.end(), proposal->alternatives.begin(), proposal->alternatives.end());

        for (const auto& candidate : queue) {
            const auto started = std::chrono::steady_clock::now();
            UpdateReport report;
            report.step = state.step;
            report.candidate = make_meta(state, candidate, state.next_discovered_id);
            try {
                SystemState trial =
                    experimental_update(state, candidate, config.candidate_split, config,
                                        derive_seed(seed, "attempt", attempt));
                const auto [pass, measured] = validate(trial, criteria);
                report.measured = measured;
                if (pass || !config.validate_updates) {
                    state = commit(trial, config.buffer_policy);
                    report.outcome = UpdateOutcome::Accepted;
                    committed = true;
                } else {
                    state = revert(state, trial);
                    report.outcome = UpdateOutcome::RejectedValidation;
                }
            } catch (const Error&) {
                report.outcome = UpdateOutcome::RejectedInsufficient;
            }
            report.duration_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
                    .count();
            result.reports.push_back(std::move(report));
            ++attempt;
            if (committed) break;
        }
    }

    if (!committed && result.reports.empty()) {
        UpdateReport report;
        report.step = state.step;
        report.outcome = UpdateOutcome::NoCandidate;
        result.reports.push_back(report);
    }

    result.state = std::move(state);
    return result;
}

std::uint64_t state_fingerprint(const SystemState& state) {
    const std::string bytes = serialize_state_canonical(state);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace srcattr
