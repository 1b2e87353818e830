#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "srcattr/feature_store.hpp"
#include "srcattr/rng.hpp"

namespace srcattr::test {

/// Temporary directory that cleans up after the test.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("srcattr-test-" + tag + "-" + std::to_string(std::random_device{}()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols,
                                     std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
    }
    return m;
}

/// Gaussian blob centered at `center`, isotropic with std `sigma`.
inline Eigen::MatrixXd blob(const Eigen::VectorXd& center, double sigma, Eigen::Index n,
                            std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd m(n, center.size());
    for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = 0; c < center.size(); ++c) {
            m(r, c) = center[c] + sigma * rng.normal();
        }
    }
    return m;
}

/// Small labeled dataset of Gaussian blobs, one per center, with train/val
/// tags assigned per-source by proportion.
inline LabeledDataset blob_dataset(const std::vector<Eigen::VectorXd>& centers, double sigma,
                                   Eigen::Index per_source_train, Eigen::Index per_source_val,
                                   std::uint64_t seed, int first_id = 0) {
    LabeledDataset ds;
    for (std::size_t s = 0; s < centers.size(); ++s) {
        const int id = first_id + static_cast<int>(s);
        const SourceKind kind = id == 0 ? SourceKind::Real : SourceKind::SyntheticKnown;
        const Eigen::MatrixXd points =
            blob(centers[s], sigma, per_source_train + per_source_val,
                 derive_seed(seed, "blob", s));
        for (Eigen::Index i = 0; i < points.rows(); ++i) {
            ds.append_row(points.row(i), SourceLabel{id, kind},
                          i < per_source_train ? Split::Train : Split::Val);
        }
    }
    return ds;
}

inline std::vector<Eigen::VectorXd> axis_centers(int count, int dim, double scale) {
    std::vector<Eigen::VectorXd> centers;
    for (int i = 0; i < count; ++i) {
        Eigen::VectorXd c = Eigen::VectorXd::Zero(dim);
        c[i % dim] = scale * (1.0 + i / dim);
        if (i % 2 == 1) c = -c;
        centers.push_back(c);
    }
    return centers;
}

}  // namespace srcattr::test
