#include <doctest.h>

#include <fstream>
#include <map>
#include <set>

#include "srcattr/feature_store.hpp"
#include "srcattr/rng.hpp"
#include "test_helpers.hpp"

using namespace srcattr;
using test::TempDir;

TEST_SUITE_BEGIN("feature_store");

namespace {

SyntheticSourceSpec gaussian_spec(int id, const Eigen::VectorXd& mean,
                                  const Eigen::MatrixXd& cov, std::uint64_t seed) {
    SyntheticSourceSpec spec;
    spec.label = SourceLabel{id, id == 0 ? SourceKind::Real : SourceKind::SyntheticKnown};
    spec.means = {mean};
    spec.covariances = {cov};
    spec.weights = Eigen::VectorXd::Ones(1);
    spec.seed = seed;
    return spec;
}

}  // namespace

TEST_CASE("load_features echoes a small csv") {
    TempDir dir("load");
    const auto path = dir.path() / "data.csv";
    {
        std::ofstream out(path);
        out << "f0,f1,f2,label,split\n";
        out << "1,2,3,0,train\n";
        out << "4,5,6,0,train\n";
        out << "7,8,9,1,train\n";
        out << "-1,-2,-3,1,train\n";
    }
    const LabeledDataset ds = load_features(path);
    CHECK(ds.size() == 4);
    CHECK(ds.dim() == 3);
    CHECK(ds.features(0, 0) == 1.0);
    CHECK(ds.features(3, 2) == -3.0);
    CHECK(ds.labels[0].id == 0);
    CHECK(ds.labels[0].kind == SourceKind::Real);
    CHECK(ds.labels[2].id == 1);
    CHECK(ds.splits[1] == Split::Train);
}

TEST_CASE("load_features rejects an empty file") {
    TempDir dir("empty");
    const auto path = dir.path() / "empty.csv";
    std::ofstream(path).close();
    CHECK_THROWS_AS(load_features(path), ParseError);
}

TEST_CASE("load_features reports the bad row on NaN") {
    TempDir dir("nan");
    const auto path = dir.path() / "bad.csv";
    {
        std::ofstream out(path);
        out << "f0,f1,label,split\n";
        out << "1,2,0,train\n";
        out << "NaN,3,0,train\n";
    }
    CHECK_THROWS_WITH_AS(load_features(path), doctest::Contains("row 1"), ParseError);
}

TEST_CASE("load_features rejects inconsistent dimensions") {
    TempDir dir("dim");
    const auto path = dir.path() / "bad.csv";
    {
        std::ofstream out(path);
        out << "f0,f1,label,split\n";
        out << "1,2,3,0,train\n";
    }
    CHECK_THROWS_AS(load_features(path), DimensionError);
}

TEST_CASE("dataset csv round-trips exactly") {
    LabeledDataset ds;
    Rng rng(11);
    for (int i = 0; i < 20; ++i) {
        Eigen::VectorXd row(4);
        for (int c = 0; c < 4; ++c) row[c] = rng.normal() * 1e3;
        ds.append_row(row, SourceLabel{i % 3, i % 3 == 0 ? SourceKind::Real
                                                         : SourceKind::SyntheticKnown},
                      i % 2 == 0 ? Split::Train : Split::Test);
    }
    TempDir dir("roundtrip");
    const auto path = dir.path() / "ds.csv";
    write_features(path, ds);
    const LabeledDataset back = load_features(path);
    REQUIRE(back.size() == ds.size());
    CHECK(back.features == ds.features);
    for (std::size_t i = 0; i < ds.labels.size(); ++i) {
        CHECK(back.labels[i].id == ds.labels[i].id);
        CHECK(back.splits[i] == ds.splits[i]);
    }
}

TEST_CASE("split_source produces the requested disjoint partition") {
    const Eigen::MatrixXd items = test::random_matrix(2000, 3, 5);
    const SplitCounts counts{750, 250, 750, 250};
    const LabeledDataset ds =
        split_source(items, SourceLabel{1, SourceKind::SyntheticKnown}, counts, 7);

    std::map<Split, int> sizes;
    for (const auto s : ds.splits) ++sizes[s];
    CHECK(sizes[Split::Train] == 750);
    CHECK(sizes[Split::Val] == 250);
    CHECK(sizes[Split::Observation] == 750);
    CHECK(sizes[Split::Test] == 250);

    // Disjointness: every selected row appears exactly once.
    std::set<std::vector<double>> seen;
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
        std::vector<double> row(ds.features.row(i).begin(), ds.features.row(i).end());
        CHECK(seen.insert(row).second);
    }
}

TEST_CASE("split_source supports the two-subset emerging shape") {
    const Eigen::MatrixXd items = test::random_matrix(1000, 2, 6);
    const LabeledDataset ds = split_source(items, SourceLabel{2, SourceKind::SyntheticKnown},
                                           SplitCounts{750, 250, 0, 0}, 3);
    CHECK(ds.subset(Split::Train).size() == 750);
    CHECK(ds.subset(Split::Val).size() == 250);
    CHECK(ds.subset(Split::Observation).size() == 0);
    CHECK(ds.subset(Split::Test).size() == 0);
}

TEST_CASE("split_source is deterministic and seed-sensitive") {
    const Eigen::MatrixXd items = test::random_matrix(100, 2, 8);
    const SplitCounts counts{50, 20, 20, 10};
    const SourceLabel label{1, SourceKind::SyntheticKnown};
    const auto a = split_source(items, label, counts, 9);
    const auto b = split_source(items, label, counts, 9);
    CHECK(a.features == b.features);
    const auto c = split_source(items, label, counts, 10);
    CHECK(a.features != c.features);
}

TEST_CASE("split_source reports the shortfall") {
    const Eigen::MatrixXd items = test::random_matrix(10, 2, 8);
    CHECK_THROWS_WITH_AS(
        split_source(items, SourceLabel{1, SourceKind::SyntheticKnown},
                     SplitCounts{10, 5, 0, 0}, 1),
        doctest::Contains("short by 5"), CapacityError);
}

TEST_CASE("synthesize_source matches the closed-form mean") {
    const auto spec = gaussian_spec(1, Eigen::VectorXd::Zero(2),
                                    Eigen::MatrixXd::Identity(2, 2), 13);
    const Eigen::MatrixXd samples = synthesize_source(spec, 10000);
    REQUIRE(samples.rows() == 10000);
    const Eigen::VectorXd mean = samples.colwise().mean();
    CHECK(std::abs(mean[0]) < 0.05);
    CHECK(std::abs(mean[1]) < 0.05);
}

TEST_CASE("synthesize_source handles n=0 and repeats under one seed") {
    const auto spec = gaussian_spec(1, Eigen::VectorXd::Ones(3),
                                    Eigen::MatrixXd::Identity(3, 3), 17);
    CHECK(synthesize_source(spec, 0).rows() == 0);
    CHECK(synthesize_source(spec, 25) == synthesize_source(spec, 25));
}

TEST_CASE("synthesize_source rejects a non-SPD covariance") {
    Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(2, 2);
    bad(0, 0) = -1.0;
    const auto spec = gaussian_spec(1, Eigen::VectorXd::Zero(2), bad, 19);
    CHECK_THROWS_AS(synthesize_source(spec, 5), ModelError);
}

TEST_CASE("mixture weights follow the simplex invariant") {
    SyntheticSourceSpec spec = gaussian_spec(1, Eigen::VectorXd::Zero(2),
                                             Eigen::MatrixXd::Identity(2, 2), 23);
    spec.weights[0] = 0.5;
    CHECK_THROWS_AS(spec.validate(), ModelError);
}

TEST_CASE("build_stream mixes known and emerging observation subsets") {
    LabeledDataset known;
    const Eigen::MatrixXd kobs = test::random_matrix(750, 2, 31);
    for (Eigen::Index i = 0; i < kobs.rows(); ++i) {
        known.append_row(kobs.row(i), SourceLabel{0, SourceKind::Real}, Split::Observation);
    }
    LabeledDataset emerging;
    const Eigen::MatrixXd eobs = test::random_matrix(750, 2, 37);
    for (Eigen::Index i = 0; i < eobs.rows(); ++i) {
        emerging.append_row(eobs.row(i), SourceLabel{5, SourceKind::SyntheticKnown},
                            Split::Observation);
    }

    const ObservationStream stream = build_stream(known, {emerging}, 41);
    REQUIRE(stream.steps.size() == 2);
    CHECK(stream.steps[0].features.rows() == 0);
    CHECK(stream.steps[1].features.rows() == 1500);
    CHECK(stream.steps[1].introduced_source == 5);

    // Conservation: the step batch is exactly the union of both subsets.
    std::multiset<std::pair<double, double>> expected, actual;
    for (Eigen::Index i = 0; i < kobs.rows(); ++i) expected.insert({kobs(i, 0), kobs(i, 1)});
    for (Eigen::Index i = 0; i < eobs.rows(); ++i) expected.insert({eobs(i, 0), eobs(i, 1)});
    const auto& batch = stream.steps[1].features;
    for (Eigen::Index i = 0; i < batch.rows(); ++i) actual.insert({batch(i, 0), batch(i, 1)});
    CHECK(expected == actual);
}

TEST_CASE("build_stream with no emerging sources has only step 0") {
    LabeledDataset known;
    known.append_row(Eigen::Vector2d(1, 2), SourceLabel{0, SourceKind::Real},
                     Split::Observation);
    const ObservationStream stream = build_stream(known, {}, 1);
    CHECK(stream.steps.size() == 1);
}

TEST_CASE("build_stream is deterministic") {
    LabeledDataset known;
    const Eigen::MatrixXd kobs = test::random_matrix(40, 2, 43);
    for (Eigen::Index i = 0; i < kobs.rows(); ++i) {
        known.append_row(kobs.row(i), SourceLabel{0, SourceKind::Real}, Split::Observation);
    }
    LabeledDataset emerging;
    const Eigen::MatrixXd eobs = test::random_matrix(40, 2, 47);
    for (Eigen::Index i = 0; i < eobs.rows(); ++i) {
        emerging.append_row(eobs.row(i), SourceLabel{3, SourceKind::SyntheticKnown},
                            Split::Observation);
    }
    const auto a = build_stream(known, {emerging}, 7);
    const auto b = build_stream(known, {emerging}, 7);
    CHECK(a.steps[1].features == b.steps[1].features);
}

TEST_CASE("manifest round-trips") {
    SourceManifest manifest;
    manifest.dimension = 3;
    manifest.sources.push_back(gaussian_spec(0, Eigen::VectorXd::Zero(3),
                                             Eigen::MatrixXd::Identity(3, 3), 3));
    manifest.sources.push_back(gaussian_spec(1, Eigen::VectorXd::Ones(3),
                                             2.0 * Eigen::MatrixXd::Identity(3, 3), 4));
    manifest.sources.back().emerging = true;

    TempDir dir("manifest");
    const auto path = dir.path() / "manifest.json";
    write_manifest(path, manifest);
    const SourceManifest back = load_manifest(path);
    REQUIRE(back.sources.size() == 2);
    CHECK(back.dimension == 3);
    CHECK(back.sources[0].label.kind == SourceKind::Real);
    CHECK(back.sources[1].emerging);
    CHECK(back.sources[1].means[0] == manifest.sources[1].means[0]);
    CHECK(back.sources[1].covariances[0] == manifest.sources[1].covariances[0]);
    CHECK(back.known().size() == 1);
    CHECK(back.emerging().size() == 1);
}

TEST_SUITE_END();
