#include <doctest.h>

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <set>

#include "srcattr/discovery.hpp"
#include "srcattr/rng.hpp"
#include "support/oracles.hpp"
#include "test_helpers.hpp"

using namespace srcattr;

TEST_SUITE_BEGIN("discovery");

namespace {

using oracle::dbscan_reference;
using oracle::same_clustering;

Buffer buffer_from(const Eigen::MatrixXd& embeddings, int truth = 1) {
    Buffer buffer;
    for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
        buffer.push(embeddings.row(i).transpose(), embeddings.row(i).transpose(), 0, truth);
    }
    return buffer;
}

}  // namespace

TEST_CASE("buffer push and capacity eviction") {
    Buffer unbounded;
    unbounded.push(Eigen::Vector2d(1, 1), Eigen::Vector2d(1, 1), 0);
    CHECK(unbounded.size() == 1);

    Buffer bounded(2);
    for (int i = 0; i < 3; ++i) {
        bounded.push(Eigen::Vector2d(i, i), Eigen::Vector2d(i, i), i);
    }
    REQUIRE(bounded.size() == 2);
    CHECK(bounded.entries()[0].step == 1);  // oldest evicted
    CHECK(bounded.entries()[1].step == 2);
}

TEST_CASE("buffer remove drops exactly the given entries") {
    Buffer buffer;
    for (int i = 0; i < 5; ++i) {
        buffer.push(Eigen::Vector2d(i, 0), Eigen::Vector2d(i, 0), i);
    }
    buffer.remove({1, 3});
    REQUIRE(buffer.size() == 3);
    CHECK(buffer.entries()[0].step == 0);
    CHECK(buffer.entries()[1].step == 2);
    CHECK(buffer.entries()[2].step == 4);
}

TEST_CASE("dbscan separates two distant blobs with no noise") {
    const double eps = 0.8;
    Eigen::MatrixXd points(100, 2);
    points.topRows(50) = test::blob(Eigen::Vector2d(0, 0), 0.1, 50, 3);
    points.bottomRows(50) = test::blob(Eigen::Vector2d(100 * eps, 0), 0.1, 50, 5);

    const DbscanResult result = dbscan(points, eps, 5);
    REQUIRE(result.clusters.size() == 2);
    CHECK(result.noise.empty());
    CHECK(result.clusters[0].size() == 50);
    CHECK(result.clusters[1].size() == 50);
    CHECK(same_clustering(result, dbscan_reference(points, eps, 5)));
}

TEST_CASE("dbscan: identical points meet the density trivially") {
    Eigen::MatrixXd points = Eigen::MatrixXd::Zero(7, 2);
    const DbscanResult result = dbscan(points, 0.5, 7);
    REQUIRE(result.clusters.size() == 1);
    CHECK(result.clusters[0].size() == 7);
}

TEST_CASE("dbscan: scattered points below min_samples are all noise") {
    const auto points = 100.0 * test::random_matrix(5, 2, 7);
    const DbscanResult result = dbscan(points, 0.01, 7);
    CHECK(result.clusters.empty());
    CHECK(result.noise.size() == 5);
}

TEST_CASE("dbscan equals the reference on random instances") {
    for (int trial = 0; trial < 100; ++trial) {
        Rng rng(5000 + trial);
        const int n = 20 + static_cast<int>(rng.index(180));
        const int dim = 2 + static_cast<int>(rng.index(3));
        Eigen::MatrixXd points(n, dim);
        // A few random blob centers plus uniform scatter makes border/noise
        // cases common.
        const int blobs = 1 + static_cast<int>(rng.index(4));
        for (int i = 0; i < n; ++i) {
            if (static_cast<int>(rng.index(5)) == 0) {
                for (int c = 0; c < dim; ++c) points(i, c) = rng.uniform(-4, 4);
            } else {
                const auto b = static_cast<double>(rng.index(blobs));
                for (int c = 0; c < dim; ++c) points(i, c) = 2.5 * b + 0.4 * rng.normal();
            }
        }
        const double eps = rng.uniform(0.3, 1.2);
        const int min_samples = 2 + static_cast<int>(rng.index(6));
        const DbscanResult mine = dbscan(points, eps, min_samples);
        const DbscanResult ref = dbscan_reference(points, eps, min_samples);
        REQUIRE(same_clustering(mine, ref));
    }
}

TEST_CASE("dbscan partition property and core membership") {
    const Eigen::MatrixXd points = test::random_matrix(120, 2, 11) * 1.5;
    const double eps = 0.7;
    const int min_samples = 4;
    const DbscanResult result = dbscan(points, eps, min_samples);

    std::vector<int> seen(120, 0);
    for (const auto& cluster : result.clusters) {
        bool has_core = false;
        for (const int i : cluster) {
            ++seen[static_cast<std::size_t>(i)];
            int neighbor_count = 0;
            for (Eigen::Index j = 0; j < points.rows(); ++j) {
                if ((points.row(i) - points.row(j)).norm() <= eps) ++neighbor_count;
            }
            if (neighbor_count >= min_samples) has_core = true;
        }
        CHECK(has_core);
    }
    for (const int i : result.noise) ++seen[static_cast<std::size_t>(i)];
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
}

TEST_CASE("noise never grows when eps grows") {
    const Eigen::MatrixXd points = test::random_matrix(150, 3, 13) * 2.0;
    std::size_t previous = points.rows() + 1;
    for (const double eps : {0.2, 0.4, 0.8, 1.6, 3.2}) {
        const auto result = dbscan(points, eps, 5);
        CHECK(result.noise.size() <= previous);
        previous = result.noise.size();
    }
}

TEST_CASE("propose_candidate finds a tight blob among scatter") {
    Eigen::MatrixXd embeddings(130, 2);
    embeddings.topRows(100) = test::blob(Eigen::Vector2d(10, 10), 0.2, 100, 17);
    embeddings.bottomRows(30) = 40.0 * test::random_matrix(30, 2, 19);
    const Buffer buffer = buffer_from(embeddings);

    const std::vector<ClusteringParams> schedule = {{1.0, 7}};
    const auto proposal = propose_candidate(buffer, schedule, 75);
    REQUIRE(proposal.has_value());
    CHECK(proposal->candidate.size() >= 76);
    for (const int idx : proposal->candidate.members) {
        CHECK(idx < 100);  // only blob points
    }
}

TEST_CASE("propose_candidate returns nothing for a small buffer") {
    const Buffer buffer = buffer_from(test::blob(Eigen::Vector2d(0, 0), 0.1, 50, 23));
    const std::vector<ClusteringParams> schedule = {{0.5, 7}};
    CHECK(!propose_candidate(buffer, schedule, 75).has_value());
}

TEST_CASE("propose_candidate orders sufficient clusters by size") {
    Eigen::MatrixXd embeddings(210, 2);
    embeddings.topRows(120) = test::blob(Eigen::Vector2d(0, 0), 0.15, 120, 29);
    embeddings.bottomRows(90) = test::blob(Eigen::Vector2d(50, 50), 0.15, 90, 31);
    const Buffer buffer = buffer_from(embeddings);

    const std::vector<ClusteringParams> schedule = {{1.0, 7}};
    const auto proposal = propose_candidate(buffer, schedule, 75);
    REQUIRE(proposal.has_value());
    CHECK(proposal->candidate.size() == 120);
    REQUIRE(proposal->alternatives.size() == 1);
    CHECK(proposal->alternatives[0].size() == 90);
}

TEST_CASE("propose_candidate walks the schedule until one entry works") {
    const Buffer buffer = buffer_from(test::blob(Eigen::Vector2d(0, 0), 0.5, 100, 37));
    // First entry is far too tight to form any cluster.
    const std::vector<ClusteringParams> schedule = {{1e-6, 7}, {2.0, 7}};
    const auto proposal = propose_candidate(buffer, schedule, 75);
    REQUIRE(proposal.has_value());
    CHECK(proposal->candidate.eps == doctest::Approx(2.0));
}

TEST_CASE("kmeans: k=1 yields the mean") {
    const Eigen::MatrixXd points = test::random_matrix(40, 3, 41);
    const auto clusters = cluster_kmeans(points, 1, 43);
    REQUIRE(clusters.size() == 1);
    CHECK(clusters[0].size() == 40);
}

TEST_CASE("kmeans recovers two separated blobs") {
    Eigen::MatrixXd points(60, 2);
    points.topRows(30) = test::blob(Eigen::Vector2d(0, 0), 0.2, 30, 47);
    points.bottomRows(30) = test::blob(Eigen::Vector2d(10, 0), 0.2, 30, 53);
    const auto clusters = cluster_kmeans(points, 2, 59);
    REQUIRE(clusters.size() == 2);
    for (const auto& cluster : clusters) {
        Eigen::Vector2d center = Eigen::Vector2d::Zero();
        for (const int i : cluster) center += points.row(i).transpose();
        center /= static_cast<double>(cluster.size());
        const bool near_a = (center - Eigen::Vector2d(0, 0)).norm() < 0.1;
        const bool near_b = (center - Eigen::Vector2d(10, 0)).norm() < 0.1;
        CHECK((near_a || near_b));
    }
}

TEST_CASE("kmeans is deterministic given the seed") {
    const Eigen::MatrixXd points = test::random_matrix(80, 2, 61);
    CHECK(cluster_kmeans(points, 3, 67) == cluster_kmeans(points, 3, 67));
}

TEST_CASE("eps schedule is evenly spaced and ascending") {
    const auto schedule = make_eps_schedule(5.0, 20.0, 10, 7);
    REQUIRE(schedule.size() == 10);
    CHECK(schedule.front().eps == doctest::Approx(5.0));
    CHECK(schedule.back().eps == doctest::Approx(20.0));
    for (std::size_t i = 1; i < schedule.size(); ++i) {
        CHECK(schedule[i].eps - schedule[i - 1].eps == doctest::Approx(15.0 / 9.0));
        CHECK(schedule[i].min_samples == 7);
    }
}

TEST_SUITE_END();
