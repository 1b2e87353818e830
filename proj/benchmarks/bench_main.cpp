#include <benchmark/benchmark.h>

#include "srcattr/attributor.hpp"
#include "srcattr/discovery.hpp"
#include "srcattr/embedder.hpp"
#include "srcattr/metrics.hpp"
#include "srcattr/rng.hpp"

namespace {

using namespace srcattr;

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
    }
    return m;
}

std::vector<int> cyclic_labels(int n, int classes) {
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i % classes;
    return labels;
}

void BM_EncodeBatch(benchmark::State& state) {
    const EmbedderArch arch{64, 16, {128, 64}};
    const auto params = init_params(arch, 7);
    const auto batch = random_matrix(state.range(0), 64, 11);
    for (auto _ : state) {
        benchmark::DoNotOptimize(encode_batch(params, batch));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EncodeBatch)->Arg(256)->Arg(1024);

void BM_MineTriplets(benchmark::State& state) {
    const auto embeddings = random_matrix(state.range(0), 16, 3);
    const auto labels = cyclic_labels(static_cast<int>(state.range(0)), 4);
    for (auto _ : state) {
        benchmark::DoNotOptimize(mine_triplets(embeddings, labels, 64));
    }
}
BENCHMARK(BM_MineTriplets)->Arg(256);

void BM_CompositeGradients(benchmark::State& state) {
    const EmbedderArch arch{64, 16, {128, 64}};
    const auto params = init_params(arch, 7);
    const auto batch = random_matrix(256, 64, 13);
    const auto labels = cyclic_labels(256, 4);
    const auto triplets = mine_triplets(encode_batch(params, batch), labels, 64);
    EmbedderGradients grads;
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            composite_loss_gradients(params, batch, triplets, 0.2, 1.0, grads));
    }
}
BENCHMARK(BM_CompositeGradients);

void BM_FitGmm(benchmark::State& state) {
    const auto points = random_matrix(750, 16, 17);
    for (auto _ : state) {
        benchmark::DoNotOptimize(fit_gmm(points, 5, 23));
    }
}
BENCHMARK(BM_FitGmm);

void BM_GmmScore(benchmark::State& state) {
    const auto points = random_matrix(750, 16, 17);
    const auto fit = fit_gmm(points, 5, 23);
    const GmmScorer scorer(fit.model);
    const auto queries = random_matrix(state.range(0), 16, 29);
    for (auto _ : state) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < queries.rows(); ++i) {
            acc += scorer.log_likelihood(queries.row(i).transpose());
        }
        benchmark::DoNotOptimize(acc);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GmmScore)->Arg(1000);

void BM_Dbscan(benchmark::State& state) {
    const auto points = random_matrix(state.range(0), 16, 31);
    for (auto _ : state) {
        benchmark::DoNotOptimize(dbscan(points, 2.0, 7));
    }
}
BENCHMARK(BM_Dbscan)->Arg(500)->Arg(1500);

void BM_RocAuc(benchmark::State& state) {
    Rng rng(37);
    std::vector<std::pair<double, bool>> scored;
    for (int i = 0; i < 10000; ++i) {
        scored.emplace_back(rng.normal() + (i % 2 ? 0.5 : 0.0), i % 2 == 1);
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(roc_auc(scored));
    }
}
BENCHMARK(BM_RocAuc);

}  // namespace

BENCHMARK_MAIN();
