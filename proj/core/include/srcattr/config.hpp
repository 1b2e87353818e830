#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "srcattr/adaptation.hpp"
#include "srcattr/common.hpp"

namespace srcattr {

/// Dataset shape and synthetic-source geometry.
struct DataConfig {
    int dimension = 64;
    int known_sources = 3;  // synthetic; the real source (id 0) is always added
    int emerging_sources = 8;
    Eigen::Index train_count = 750;
    Eigen::Index val_count = 250;
    Eigen::Index observation_count = 750;
    Eigen::Index test_count = 250;
    Eigen::Index emerging_observation_count = 750;
    Eigen::Index emerging_test_count = 250;
    int components_per_source = 2;
    double center_scale = 6.0;      // std-dev of source centers per coordinate
    double component_spread = 2.0;  // component mean offset from the center
    double within_scale = 1.0;      // base covariance scale
    std::string manifest;           // explicit manifest path; empty = generate
    std::string data_dir = "data";  // relative to the output root
};

struct DiscoveryConfig {
    int min_samples = 7;
    double eps_min = 5.0;
    double eps_max = 20.0;
    int eps_trials = 10;
    int sufficiency_threshold = 75;
    std::size_t buffer_capacity = 0;  // 0 = unbounded
    std::string buffer_policy = "retain";  // retain | clear
    std::string algorithm = "dbscan";      // dbscan | kmeans
    int kmeans_k = 5;
};

struct ValidationConfig {
    bool enabled = true;  // run the gate; when off every trial commits
    double min_att_known = 0.8;
    double min_detection = 0.95;
    double min_att_new = 0.65;
};

struct RunConfig {
    std::string output_dir = "out";
    std::uint64_t seed = 1;
    bool adaptation_enabled = true;  // frozen baseline when off
};

struct ExperimentConfig {
    DataConfig data;
    EmbedderArch arch;          // [embedder] dims
    TrainConfig train;          // [embedder] optimization
    int gmm_components = 5;     // [attributor]
    GmmFitConfig gmm;           // [attributor]
    DiscoveryConfig discovery;  // [discovery]
    double candidate_split = 0.75;  // [adaptation]
    bool warm_start = true;         // [adaptation]
    ValidationConfig validation;    // [adaptation]
    RunConfig run;

    void validate() const;

    ValidationCriteria criteria() const;
    AdaptationConfig adaptation() const;
    std::vector<ClusteringParams> schedule() const;
};

/// Paper-derived defaults for every field.
ExperimentConfig default_config();

/// Loads a sectioned key=value file ('#' comments). Unknown keys are
/// rejected; missing keys keep their defaults.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies one `section.key=value` override.
void apply_override(ExperimentConfig& config, const std::string& assignment);

/// Writes the full effective configuration; load_config(write) == config.
void write_config(const std::filesystem::path& path, const ExperimentConfig& config);

}  // namespace srcattr
