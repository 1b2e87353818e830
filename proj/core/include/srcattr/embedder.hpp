#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "srcattr/common.hpp"
#include "srcattr/feature_store.hpp"

namespace srcattr {

/// Layer shape of the autoencoder. The decoder mirrors the encoder's
/// hidden stack. Hidden layers use tanh; output layers are linear.
struct EmbedderArch {
    int input_dim = 64;
    int embedding_dim = 16;
    std::vector<int> hidden = {128, 64};
};

struct EmbedderParams {
    std::vector<Eigen::MatrixXd> enc_w;  // layer l maps prev-dim -> next-dim, stored (out x in)
    std::vector<Eigen::VectorXd> enc_b;
    std::vector<Eigen::MatrixXd> dec_w;
    std::vector<Eigen::VectorXd> dec_b;
    std::string activation = "tanh";

    int input_dim() const { return enc_w.empty() ? 0 : static_cast<int>(enc_w.front().cols()); }
    int embedding_dim() const { return enc_w.empty() ? 0 : static_cast<int>(enc_w.back().rows()); }

    bool operator==(const EmbedderParams&) const = default;
};

/// One mined triplet; indices point into the batch it was mined from.
struct Triplet {
    int anchor = 0;
    int positive = 0;
    int negative = 0;
};

struct TrainConfig {
    double learning_rate = 1e-4;
    double weight_decay = 0.01;
    int epochs = 50;
    int batch_size = 256;
    int hardest_k = 64;
    double margin = 0.2;
    double lambda = 1.0;  // preservation weight
    int patience = 5;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainResult {
    EmbedderParams params;   // best-validation parameters
    int best_epoch = 0;
    int epochs_run = 0;
    std::vector<double> val_loss_history;
};

/// Gradient accumulator mirroring EmbedderParams.
struct EmbedderGradients {
    std::vector<Eigen::MatrixXd> enc_w;
    std::vector<Eigen::VectorXd> enc_b;
    std::vector<Eigen::MatrixXd> dec_w;
    std::vector<Eigen::VectorXd> dec_b;
};

/// Glorot-uniform weights, zero biases.
EmbedderParams init_params(const EmbedderArch& arch, std::uint64_t seed);

Embedding encode(const EmbedderParams& params, const FeatureVector& phi);
FeatureVector decode(const EmbedderParams& params, const Embedding& psi);

/// Batch variants; one row per sample.
Eigen::MatrixXd encode_batch(const EmbedderParams& params, const Eigen::MatrixXd& batch);
Eigen::MatrixXd decode_batch(const EmbedderParams& params, const Eigen::MatrixXd& psi);

/// Batch-hard mining: per anchor, the k positives with the largest
/// anchor-positive distance crossed with the k negatives with the smallest
/// anchor-negative distance (fewer when unavailable). Distance ties break
/// toward the smaller index.
std::vector<Triplet> mine_triplets(const Eigen::MatrixXd& embeddings,
                                   const std::vector<int>& labels, int k);

/// Sum over triplets of max(0, d(a,p)^2 - d(a,n)^2 + margin) in embedding space.
double attribution_loss(const EmbedderParams& params, const Eigen::MatrixXd& batch,
                        std::span<const Triplet> triplets, double margin);

/// Mean over the batch of the squared reconstruction error.
double preservation_loss(const EmbedderParams& params, const Eigen::MatrixXd& batch);

/// attribution_loss on internally mined triplets + lambda * preservation_loss.
double total_loss(const EmbedderParams& params, const Eigen::MatrixXd& batch,
                  const std::vector<int>& labels, const TrainConfig& config);

/// Loss for a frozen triplet set, and the same with analytic gradients.
/// This is the objective the optimizer steps on within a mini-batch.
double composite_loss(const EmbedderParams& params, const Eigen::MatrixXd& batch,
                      std::span<const Triplet> triplets, double margin, double lambda);
double composite_loss_gradients(const EmbedderParams& params, const Eigen::MatrixXd& batch,
                                std::span<const Triplet> triplets, double margin,
                                double lambda, EmbedderGradients& grads);

/// AdamW minimization of the embedding loss over the dataset's train
/// split, early-stopped on the val split. Moment estimates start at zero.
/// `warm_start` seeds the weights; otherwise they are freshly initialized.
TrainResult train(const LabeledDataset& dataset, const EmbedderArch& arch,
                  const TrainConfig& config,
                  const EmbedderParams* warm_start = nullptr);

}  // namespace srcattr
