#include "srcattr/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "srcattr/rng.hpp"

namespace srcattr {

namespace {

std::vector<int> encoder_dims(const EmbedderArch& arch) {
    std::vector<int> dims;
    dims.push_back(arch.input_dim);
    dims.insert(dims.end(), arch.hidden.begin(), arch.hidden.end());
    dims.push_back(arch.embedding_dim);
    return dims;
}

Eigen::MatrixXd glorot(int rows, int cols, Rng& rng) {
    const double limit = std::sqrt(6.0 / (rows + cols));
    Eigen::MatrixXd w(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) w(r, c) = rng.uniform(-limit, limit);
    }
    return w;
}

/// Activations per layer, index 0 being the input. The last layer of each
/// stack is linear, inner layers are tanh.
struct ForwardCache {
    std::vector<Eigen::MatrixXd> enc;  // enc[0] = X, enc.back() = psi
    std::vector<Eigen::MatrixXd> dec;  // dec[0] = psi, dec.back() = reconstruction
};

Eigen::MatrixXd run_stack(const std::vector<Eigen::MatrixXd>& weights,
                          const std::vector<Eigen::VectorXd>& biases,
                          const Eigen::MatrixXd& input,
                          std::vector<Eigen::MatrixXd>* trace) {
    Eigen::MatrixXd h = input;
    if (trace) trace->push_back(h);
    for (std::size_t l = 0; l < weights.size(); ++l) {
        Eigen::MatrixXd z = h * weights[l].transpose();
        z.rowwise() += biases[l].transpose();
        if (l + 1 < weights.size()) z = z.array().tanh();
        h = std::move(z);
        if (trace) trace->push_back(h);
    }
    return h;
}

/// Backprop through one stack. `upstream` is dL/d(output). Returns
/// dL/d(input). Activations in `trace` come from run_stack.
Eigen::MatrixXd backprop_stack(const std::vector<Eigen::MatrixXd>& weights,
                               const std::vector<Eigen::MatrixXd>& trace,
                               const Eigen::MatrixXd& upstream,
                               std::vector<Eigen::MatrixXd>& grad_w,
                               std::vector<Eigen::VectorXd>& grad_b) {
    Eigen::MatrixXd delta = upstream;  // dL/d(pre-activation of current layer)
    for (std::size_t l = weights.size(); l-- > 0;) {
        // Output layer is linear; hidden layers carry tanh'(z) = 1 - h^2.
        if (l + 1 < weights.size()) {
            delta.array() *= (1.0 - trace[l + 1].array().square());
        }
        grad_w[l] += delta.transpose() * trace[l];
        grad_b[l] += delta.colwise().sum().transpose();
        if (l > 0) {
            delta = delta * weights[l];
        } else {
            return delta * weights[l];
        }
    }
    return Eigen::MatrixXd::Zero(upstream.rows(), weights.front().cols());
}

void check_input_dim(const EmbedderParams& params, Eigen::Index cols) {
    if (cols != params.input_dim()) {
        throw DimensionError("feature dimension " + std::to_string(cols) +
                             " does not match encoder input " +
                             std::to_string(params.input_dim()));
    }
}

void check_embedding_dim(const EmbedderParams& params, Eigen::Index cols) {
    if (cols != params.embedding_dim()) {
        throw DimensionError("embedding dimension " + std::to_string(cols) +
                             " does not match decoder input " +
                             std::to_string(params.embedding_dim()));
    }
}

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& embeddings) {
    const Eigen::VectorXd sq = embeddings.rowwise().squaredNorm();
    Eigen::MatrixXd dist = -2.0 * embeddings * embeddings.transpose();
    dist.colwise() += sq;
    dist.rowwise() += sq.transpose();
    return dist.cwiseMax(0.0);
}

/// Per-triplet hinge terms evaluated from a precomputed distance matrix.
double hinge_sum(const Eigen::MatrixXd& dist, std::span<const Triplet> triplets,
                 double margin) {
    double loss = 0.0;
    for (const auto& t : triplets) {
        const double h = dist(t.anchor, t.positive) - dist(t.anchor, t.negative) + margin;
        if (h > 0.0) loss += h;
    }
    return loss;
}

struct AdamState {
    std::vector<Eigen::MatrixXd> m_w, v_w;
    std::vector<Eigen::VectorXd> m_b, v_b;
};

struct AdamW {
    double lr;
    double weight_decay;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    AdamState enc, dec;

    static void init_like(AdamState& s, const std::vector<Eigen::MatrixXd>& w,
                          const std::vector<Eigen::VectorXd>& b) {
        for (const auto& m : w) {
            s.m_w.push_back(Eigen::MatrixXd::Zero(m.rows(), m.cols()));
            s.v_w.push_back(Eigen::MatrixXd::Zero(m.rows(), m.cols()));
        }
        for (const auto& v : b) {
            s.m_b.push_back(Eigen::VectorXd::Zero(v.size()));
            s.v_b.push_back(Eigen::VectorXd::Zero(v.size()));
        }
    }

    AdamW(const EmbedderParams& params, double lr_, double wd) : lr(lr_), weight_decay(wd) {
        init_like(enc, params.enc_w, params.enc_b);
        init_like(dec, params.dec_w, params.dec_b);
    }

    template <typename Tensor>
    void update_one(Tensor& theta, const Tensor& grad, Tensor& m, Tensor& v,
                    double bc1, double bc2, bool decay) {
        m = beta1 * m + (1.0 - beta1) * grad;
        v = beta2 * v.array().matrix() + (1.0 - beta2) * grad.array().square().matrix();
        const auto m_hat = m.array() / bc1;
        const auto v_hat = v.array() / bc2;
        theta.array() -= lr * (m_hat / (v_hat.sqrt() + eps));
        if (decay) theta.array() -= lr * weight_decay * theta.array();
    }

    void apply(EmbedderParams& params, const EmbedderGradients& grads) {
        ++step;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        for (std::size_t l = 0; l < params.enc_w.size(); ++l) {
            update_one(params.enc_w[l], grads.enc_w[l], enc.m_w[l], enc.v_w[l], bc1, bc2, true);
            update_one(params.enc_b[l], grads.enc_b[l], enc.m_b[l], enc.v_b[l], bc1, bc2, false);
        }
        for (std::size_t l = 0; l < params.dec_w.size(); ++l) {
            update_one(params.dec_w[l], grads.dec_w[l], dec.m_w[l], dec.v_w[l], bc1, bc2, true);
            update_one(params.dec_b[l], grads.dec_b[l], dec.m_b[l], dec.v_b[l], bc1, bc2, false);
        }
    }
};

EmbedderGradients zero_gradients(const EmbedderParams& params) {
    EmbedderGradients g;
    for (const auto& w : params.enc_w) g.enc_w.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    for (const auto& b : params.enc_b) g.enc_b.push_back(Eigen::VectorXd::Zero(b.size()));
    for (const auto& w : params.dec_w) g.dec_w.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    for (const auto& b : params.dec_b) g.dec_b.push_back(Eigen::VectorXd::Zero(b.size()));
    return g;
}

}  // namespace

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
    if (weight_decay < 0.0) throw ConfigError("weight decay must be non-negative");
    if (epochs <= 0) throw ConfigError("epochs must be positive");
    if (batch_size <= 1) throw ConfigError("batch size must exceed 1");
    if (hardest_k <= 0) throw ConfigError("hardest_k must be positive");
    if (hardest_k > batch_size - 1) {
        throw ConfigError("hardest_k must be at most batch_size - 1");
    }
    if (margin < 0.0) throw ConfigError("margin must be non-negative");
    if (lambda < 0.0) throw ConfigError("lambda must be non-negative");
    if (patience < 0) throw ConfigError("patience must be non-negative");
}

EmbedderParams init_params(const EmbedderArch& arch, std::uint64_t seed) {
    if (arch.input_dim <= 0 || arch.embedding_dim <= 0) {
        throw ConfigError("embedder dimensions must be positive");
    }
    Rng rng(seed);
    EmbedderParams params;
    const auto dims = encoder_dims(arch);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        params.enc_w.push_back(glorot(dims[l + 1], dims[l], rng));
        params.enc_b.push_back(Eigen::VectorXd::Zero(dims[l + 1]));
    }
    for (std::size_t l = dims.size() - 1; l > 0; --l) {
        params.dec_w.push_back(glorot(dims[l - 1], dims[l], rng));
        params.dec_b.push_back(Eigen::VectorXd::Zero(dims[l - 1]));
    }
    return params;
}

Embedding encode(const EmbedderParams& params, const FeatureVector& phi) {
    check_input_dim(params, phi.size());
    return run_stack(params.enc_w, params.enc_b, phi.transpose(), nullptr).row(0);
}

FeatureVector decode(const EmbedderParams& params, const Embedding& psi) {
    check_embedding_dim(params, psi.size());
    return run_stack(params.dec_w, params.dec_b, psi.transpose(), nullptr).row(0);
}

Eigen::MatrixXd encode_batch(const EmbedderParams& params, const Eigen::MatrixXd& batch) {
    check_input_dim(params, batch.cols());
    return run_stack(params.enc_w, params.enc_b, batch, nullptr);
}

Eigen::MatrixXd decode_batch(const EmbedderParams& params, const Eigen::MatrixXd& psi) {
    check_embedding_dim(params, psi.cols());
    return run_stack(params.dec_w, params.dec_b, psi, nullptr);
}

std::vector<Triplet> mine_triplets(const Eigen::MatrixXd& embeddings,
                                   const std::vector<int>& labels, int k) {
    const int n = static_cast<int>(embeddings.rows());
    if (static_cast<int>(labels.size()) != n) {
        throw DimensionError("labels and embeddings disagree in length");
    }
    const Eigen::MatrixXd dist = squared_distances(embeddings);

    std::vector<Triplet> triplets;
    const auto per_anchor = static_cast<std::size_t>(std::min(k, n - 1));
    triplets.reserve(std::min<std::size_t>(static_cast<std::size_t>(n) * per_anchor * per_anchor,
                                           std::size_t{1} << 22));
    std::vector<std::pair<double, int>> positives, negatives;
    for (int a = 0; a < n; ++a) {
        positives.clear();
        negatives.clear();
        for (int j = 0; j < n; ++j) {
            if (j == a) continue;
            if (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(a)]) {
                positives.emplace_back(dist(a, j), j);
            } else {
                negatives.emplace_back(dist(a, j), j);
            }
        }
        if (positives.empty() || negatives.empty()) continue;

        const auto harder_positive = [](const auto& x, const auto& y) {
            return x.first != y.first ? x.first > y.first : x.second < y.second;
        };
        const auto harder_negative = [](const auto& x, const auto& y) {
            return x.first != y.first ? x.first < y.first : x.second < y.second;
        };
        const std::size_t kp = std::min<std::size_t>(positives.size(), static_cast<std::size_t>(k));
        const std::size_t kn = std::min<std::size_t>(negatives.size(), static_cast<std::size_t>(k));
        std::partial_sort(positives.begin(), positives.begin() + static_cast<long>(kp),
                          positives.end(), harder_positive);
        std::partial_sort(negatives.begin(), negatives.begin() + static_cast<long>(kn),
                          negatives.end(), harder_negative);

        for (std::size_t p = 0; p < kp; ++p) {
            for (std::size_t q = 0; q < kn; ++q) {
                triplets.push_back(Triplet{a, positives[p].second, negatives[q].second});
            }
        }
    }
    return triplets;
}

double attribution_loss(const EmbedderParams& params, const Eigen::MatrixXd& batch,
                        std::span<const Triplet> triplets, double margin) {
    if (margin < 0.0) throw ConfigError("margin must be non-negative");
    const Eigen::MatrixXd psi = encode_batch(params, batch);
    return hinge_sum(squared_distances(psi), triplets, margin);
}

double preservation_loss(const EmbedderParams& params, const Eigen::MatrixXd& batch) {
    if (batch.rows() == 0) throw CapacityError("preservation loss needs a non-empty batch");
    const Eigen::MatrixXd recon = decode_batch(params, encode_batch(params, batch));
    return (batch - recon).rowwise().squaredNorm().mean();
}

double total_loss(const EmbedderParams& params, const Eigen::MatrixXd& batch,
                  const std::vector<int>& labels, const TrainConfig& config) {
    const Eigen::MatrixXd psi = encode_batch(params, batch);
    const auto triplets = mine_triplets(psi, labels, config.hardest_k);
    return hinge_sum(squared_distances(psi), triplets, config.margin) +
           config.lambda * preservation_loss(params, batch);
}

double composite_loss(const EmbedderParams& params, const Eigen::MatrixXd& batch,
                      std::span<const Triplet> triplets, double margin, double lambda) {
    double loss = attribution_loss(params, batch, triplets, margin);
    if (lambda != 0.0) loss += lambda * preservation_loss(params, batch);
    return loss;
}

double composite_loss_gradients(const EmbedderParams& params, const Eigen::MatrixXd& batch,
                                std::span<const Triplet> triplets, double margin,
                                double lambda, EmbedderGradients& grads) {
    const Eigen::Index n = batch.rows();
    ForwardCache cache;
    const Eigen::MatrixXd psi = run_stack(params.enc_w, params.enc_b, batch, &cache.enc);
    const Eigen::MatrixXd recon = run_stack(params.dec_w, params.dec_b, psi, &cache.dec);

    grads = zero_gradients(params);

    // Attribution term. Hinge gradients decompose per (anchor, mate), so the
    // active-triplet counts per mate are accumulated first and the O(E) row
    // updates run once per distinct mate instead of once per triplet.
    const Eigen::MatrixXd dist = squared_distances(psi);
    double loss = 0.0;
    Eigen::MatrixXd d_psi = Eigen::MatrixXd::Zero(n, psi.cols());
    std::vector<double> pos_count(static_cast<std::size_t>(n), 0.0);
    std::vector<double> neg_count(static_cast<std::size_t>(n), 0.0);
    std::vector<int> touched_pos, touched_neg;
    std::size_t t = 0;
    while (t < triplets.size()) {
        const int a = triplets[t].anchor;
        std::size_t end = t;
        while (end < triplets.size() && triplets[end].anchor == a) ++end;

        touched_pos.clear();
        touched_neg.clear();
        for (std::size_t i = t; i < end; ++i) {
            const auto& tr = triplets[i];
            const double h = dist(a, tr.positive) - dist(a, tr.negative) + margin;
            if (h <= 0.0) continue;
            loss += h;
            if (pos_count[static_cast<std::size_t>(tr.positive)] == 0.0) {
                touched_pos.push_back(tr.positive);
            }
            if (neg_count[static_cast<std::size_t>(tr.negative)] == 0.0) {
                touched_neg.push_back(tr.negative);
            }
            pos_count[static_cast<std::size_t>(tr.positive)] += 1.0;
            neg_count[static_cast<std::size_t>(tr.negative)] += 1.0;
        }
        // Per active triplet: dL/da = 2(n - p), dL/dp = 2(p - a), dL/dn = 2(a - n).
        for (const int p : touched_pos) {
            const double c = pos_count[static_cast<std::size_t>(p)];
            d_psi.row(p) += 2.0 * c * (psi.row(p) - psi.row(a));
            d_psi.row(a) -= 2.0 * c * psi.row(p);
            pos_count[static_cast<std::size_t>(p)] = 0.0;
        }
        for (const int q : touched_neg) {
            const double c = neg_count[static_cast<std::size_t>(q)];
            d_psi.row(q) += 2.0 * c * (psi.row(a) - psi.row(q));
            d_psi.row(a) += 2.0 * c * psi.row(q);
            neg_count[static_cast<std::size_t>(q)] = 0.0;
        }
        t = end;
    }

    // Preservation term: mean over the batch of the squared error.
    if (lambda != 0.0) {
        const Eigen::MatrixXd err = recon - batch;
        loss += lambda * err.rowwise().squaredNorm().mean();
        const Eigen::MatrixXd d_recon = (2.0 * lambda / static_cast<double>(n)) * err;
        d_psi += backprop_stack(params.dec_w, cache.dec, d_recon, grads.dec_w, grads.dec_b);
    }

    backprop_stack(params.enc_w, cache.enc, d_psi, grads.enc_w, grads.enc_b);
    return loss;
}

TrainResult train(const LabeledDataset& dataset, const EmbedderArch& arch,
                  const TrainConfig& config, const EmbedderParams* warm_start) {
    config.validate();
    const LabeledDataset train_set = dataset.subset(Split::Train);
    const LabeledDataset val_set = dataset.subset(Split::Val);
    if (train_set.source_ids().size() < 2) {
        throw CapacityError("training requires samples from at least 2 sources");
    }
    if (val_set.size() == 0) {
        throw CapacityError("training requires a non-empty validation split");
    }

    auto label_ids = [](const LabeledDataset& ds) {
        std::vector<int> ids;
        ids.reserve(ds.labels.size());
        for (const auto& l : ds.labels) ids.push_back(l.id);
        return ids;
    };
    const std::vector<int> train_labels = label_ids(train_set);
    const std::vector<int> val_labels = label_ids(val_set);

    EmbedderParams params =
        warm_start ? *warm_start : init_params(arch, derive_seed(config.seed, "init"));
    if (params.input_dim() != train_set.dim()) {
        throw DimensionError("warm-start parameters do not match the data dimension");
    }

    AdamW optimizer(params, config.learning_rate, config.weight_decay);
    const Eigen::Index n = train_set.size();
    const Eigen::Index bs = std::min<Eigen::Index>(config.batch_size, n);
    const int effective_k = static_cast<int>(std::min<Eigen::Index>(config.hardest_k, bs - 1));

    // Fixed-order batched loss over a dataset slice; used for validation.
    auto evaluate = [&](const LabeledDataset& ds, const std::vector<int>& ids) {
        double loss = 0.0;
        for (Eigen::Index start = 0; start < ds.size(); start += bs) {
            const Eigen::Index len = std::min(bs, ds.size() - start);
            const Eigen::MatrixXd batch = ds.features.middleRows(start, len);
            std::vector<int> batch_ids(ids.begin() + start, ids.begin() + start + len);
            TrainConfig eval_cfg = config;
            eval_cfg.hardest_k = std::min<int>(effective_k, static_cast<int>(len) - 1);
            loss += total_loss(params, batch, batch_ids, eval_cfg);
        }
        return loss;
    };

    TrainResult result;
    double best_val = std::numeric_limits<double>::infinity();

    EmbedderGradients grads;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        if (epoch - result.best_epoch > config.patience) break;

        const auto order = shuffled_indices(static_cast<std::size_t>(n),
                                            derive_seed(config.seed, "epoch", epoch));
        for (Eigen::Index start = 0; start < n; start += bs) {
            const Eigen::Index len = std::min(bs, n - start);
            Eigen::MatrixXd batch(len, train_set.dim());
            std::vector<int> batch_ids(static_cast<std::size_t>(len));
            for (Eigen::Index i = 0; i < len; ++i) {
                const auto src = static_cast<Eigen::Index>(order[static_cast<std::size_t>(start + i)]);
                batch.row(i) = train_set.features.row(src);
                batch_ids[static_cast<std::size_t>(i)] = train_labels[static_cast<std::size_t>(src)];
            }
            const int k = std::min<int>(effective_k, static_cast<int>(len) - 1);
            const auto triplets = mine_triplets(encode_batch(params, batch), batch_ids, k);
            const double loss = composite_loss_gradients(params, batch, triplets,
                                                         config.margin, config.lambda, grads);
            if (!std::isfinite(loss)) {
                throw TrainingError("training loss diverged at epoch " + std::to_string(epoch),
                                    epoch);
            }
            optimizer.apply(params, grads);
        }

        const double val_loss = evaluate(val_set, val_labels);
        if (!std::isfinite(val_loss)) {
            throw TrainingError("validation loss diverged at epoch " + std::to_string(epoch),
                                epoch);
        }
        result.val_loss_history.push_back(val_loss);
        result.epochs_run = epoch + 1;
        if (val_loss < best_val) {
            best_val = val_loss;
            result.best_epoch = epoch;
            result.params = params;
        }
    }
    if (result.params.enc_w.empty()) result.params = params;
    return result;
}

}  // namespace srcattr
