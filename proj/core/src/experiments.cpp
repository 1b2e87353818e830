#include "srcattr/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "srcattr/rng.hpp"
#include "srcattr/serialization.hpp"

namespace srcattr {

namespace {

std::string format_double(double value) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    (void)ec;
    return std::string(buf, ptr);
}

/// Scores one labeled test set under the current state. Discovered labels
/// are resolved through `mapping` so attribution accuracy can be measured
/// against ground truth; detection keeps the system's raw real/synthetic
/// call.
std::vector<EvalRecord> score_dataset(const SystemState& state, const BankScorer& scorer,
                                      const LabeledDataset& data,
                                      const std::map<int, int>& mapping, int step) {
    std::vector<EvalRecord> records;
    if (data.size() == 0) return records;
    const Eigen::MatrixXd psi = encode_batch(state.embedder, data.features);
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        const Embedding embedding = psi.row(i).transpose();
        SourceLabel predicted = scorer.attribute(embedding);
        const auto it = mapping.find(predicted.id);
        if (it != mapping.end()) predicted.id = it->second;
        EvalRecord record;
        record.truth = data.labels[static_cast<std::size_t>(i)];
        record.predicted = predicted;
        record.score = -scorer.real_margin(embedding);
        record.step = step;
        records.push_back(record);
    }
    return records;
}

StepMetrics measure_step(const SystemState& state, const ScenarioData& scenario,
                         const std::map<int, int>& mapping,
                         const std::vector<int>& introduced_so_far,
                         std::optional<int> introduced_now, int step) {
    const BankScorer scorer(state.attributor);

    std::vector<EvalRecord> records;
    std::set<int> emerging_ids;
    for (const auto& spec : scenario.manifest.emerging()) emerging_ids.insert(spec.label.id);

    std::vector<int> population;
    for (const auto& spec : scenario.manifest.known()) population.push_back(spec.label.id);
    population.insert(population.end(), introduced_so_far.begin(), introduced_so_far.end());

    for (const int id : population) {
        const auto found = scenario.test_by_source.find(id);
        if (found == scenario.test_by_source.end()) continue;
        const auto scored = score_dataset(state, scorer, found->second, mapping, step);
        records.insert(records.end(), scored.begin(), scored.end());
    }

    StepMetrics row;
    row.step = step;
    row.det_acc = detection_accuracy(records);
    std::vector<std::pair<double, bool>> scored;
    for (const auto& r : records) {
        scored.emplace_back(r.score, r.truth.kind != SourceKind::Real);
    }
    row.det_auc = roc_auc(scored);
    row.att_acc = attribution_accuracy(records, AttributionScope::All);
    row.att_acc_known = attribution_accuracy(records, AttributionScope::KnownOnly, emerging_ids);

    if (introduced_now) {
        std::vector<EvalRecord> new_records;
        std::vector<std::pair<double, bool>> new_scored;
        for (const auto& r : records) {
            const bool is_new = r.truth.id == *introduced_now;
            if (is_new) new_records.push_back(r);
            if (is_new || r.truth.kind == SourceKind::Real) {
                new_scored.emplace_back(r.score, is_new);
            }
        }
        if (!new_records.empty()) {
            row.new_det_acc = detection_accuracy(new_records);
            row.new_det_auc = roc_auc(new_scored);
            row.new_att_acc =
                attribution_accuracy(records, AttributionScope::NewOnly, {*introduced_now});
        }
    }
    return row;
}

void write_series(const std::filesystem::path& path, const std::vector<StepMetrics>& rows,
                  double StepMetrics::* field, const char* name) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "step," << name << '\n';
    for (const auto& row : rows) {
        out << row.step << ',' << format_double(row.*field) << '\n';
    }
}

}  // namespace

SourceManifest build_default_manifest(const DataConfig& data, std::uint64_t seed) {
    SourceManifest manifest;
    manifest.dimension = data.dimension;

    const int total = 1 + data.known_sources + data.emerging_sources;
    for (int id = 0; id < total; ++id) {
        SyntheticSourceSpec spec;
        spec.label.id = id;
        spec.label.kind = id == 0 ? SourceKind::Real : SourceKind::SyntheticKnown;
        spec.emerging = id > data.known_sources;
        spec.seed = derive_seed(seed, "source-samples", static_cast<std::uint64_t>(id));

        Rng rng(derive_seed(seed, "source-geometry", static_cast<std::uint64_t>(id)));
        Eigen::VectorXd center(data.dimension);
        for (int i = 0; i < data.dimension; ++i) {
            center[i] = data.center_scale * rng.normal();
        }
        const int comps = std::max(1, data.components_per_source);
        for (int c = 0; c < comps; ++c) {
            Eigen::VectorXd mean = center;
            for (int i = 0; i < data.dimension; ++i) {
                mean[i] += data.component_spread * rng.normal();
            }
            Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(data.dimension, data.dimension);
            for (int i = 0; i < data.dimension; ++i) {
                const double scale = rng.uniform(0.7, 1.3);
                cov(i, i) = data.within_scale * data.within_scale * scale;
            }
            spec.means.push_back(std::move(mean));
            spec.covariances.push_back(std::move(cov));
        }
        spec.weights = Eigen::VectorXd::Constant(comps, 1.0 / comps);
        manifest.sources.push_back(std::move(spec));
    }
    return manifest;
}

std::filesystem::path gen_data(const ExperimentConfig& config,
                               const std::filesystem::path& output_root) {
    config.validate();
    const std::filesystem::path data_dir = output_root / config.data.data_dir;
    std::filesystem::create_directories(data_dir);

    SourceManifest manifest =
        config.data.manifest.empty()
            ? build_default_manifest(config.data, config.run.seed)
            : load_manifest(config.data.manifest);
    if (manifest.dimension != config.data.dimension) {
        throw ConfigError("manifest dimension " + std::to_string(manifest.dimension) +
                          " does not match data.dimension " +
                          std::to_string(config.data.dimension));
    }
    write_manifest(data_dir / "manifest.json", manifest);

    for (const auto& spec : manifest.sources) {
        SplitCounts counts;
        if (spec.emerging) {
            counts = SplitCounts{0, 0, config.data.emerging_observation_count,
                                 config.data.emerging_test_count};
        } else {
            counts = SplitCounts{config.data.train_count, config.data.val_count,
                                 config.data.observation_count, config.data.test_count};
        }
        const Eigen::MatrixXd samples = synthesize_source(spec, counts.total());
        const LabeledDataset dataset = split_source(
            samples, spec.label, counts,
            derive_seed(config.run.seed, "split", static_cast<std::uint64_t>(spec.label.id)));
        write_features(data_dir / ("source-" + std::to_string(spec.label.id) + ".csv"),
                       dataset);
    }
    return data_dir;
}

ScenarioData load_scenario(const ExperimentConfig& config,
                           const std::filesystem::path& output_root) {
    const std::filesystem::path data_dir = output_root / config.data.data_dir;
    if (!std::filesystem::exists(data_dir / "manifest.json")) {
        throw IoError("no manifest at " + (data_dir / "manifest.json").string() +
                      "; run gen-data first");
    }
    ScenarioData scenario;
    scenario.manifest = load_manifest(data_dir / "manifest.json");

    for (const auto& spec : scenario.manifest.sources) {
        const auto path = data_dir / ("source-" + std::to_string(spec.label.id) + ".csv");
        LabeledDataset dataset = load_features(path);
        for (auto& label : dataset.labels) label = spec.label;  // manifest kind wins
        scenario.test_by_source[spec.label.id] = dataset.subset(Split::Test);
        if (spec.emerging) {
            scenario.emerging.push_back(std::move(dataset));
        } else {
            scenario.known.append(dataset);
        }
    }
    return scenario;
}

SequentialResult run_sequential(const ExperimentConfig& config,
                                const std::filesystem::path& output_root,
                                const std::string& run_name) {
    config.validate();
    const std::uint64_t master = config.run.seed;
    const std::string name =
        run_name.empty() ? "sequential-seed" + std::to_string(master) : run_name;

    SequentialResult result;
    result.run_dir = output_root / "runs" / name;
    std::filesystem::create_directories(result.run_dir / "metrics");
    std::filesystem::create_directories(result.run_dir / "state");
    write_config(result.run_dir / "effective-config.toml", config);
    const auto audit_path = result.run_dir / "audit.jsonl";
    std::filesystem::remove(audit_path);

    ScenarioData scenario = load_scenario(config, output_root);
    const ObservationStream stream =
        build_stream(scenario.known, scenario.emerging, derive_seed(master, "stream"));

    const AdaptationConfig acfg = config.adaptation();
    const ValidationCriteria criteria = config.criteria();
    const auto schedule = config.schedule();
    const bool use_kmeans = config.discovery.algorithm == "kmeans";

    SystemState state = initialize_state(scenario.known, acfg, derive_seed(master, "init"));
    save_state(result.run_dir / "state" / "step-0", state);

    std::vector<int> introduced;
    result.steps.push_back(
        measure_step(state, scenario, result.discovered_to_truth, introduced, std::nullopt, 0));
    write_step_metrics(result.run_dir / "metrics" / "step-0.csv", result.steps.back());

    for (std::size_t l = 1; l < stream.steps.size(); ++l) {
        const StreamStep& step = stream.steps[l];
        std::vector<int> truth_ids;
        truth_ids.reserve(step.truth.size());
        for (const auto& label : step.truth) truth_ids.push_back(label.id);

        std::span<const ClusteringParams> effective_schedule =
            config.run.adaptation_enabled ? std::span<const ClusteringParams>(schedule)
                                          : std::span<const ClusteringParams>();
        CycleResult cycle = run_cycle(std::move(state), step.features, truth_ids, criteria,
                                      effective_schedule,
                                      config.discovery.sufficiency_threshold, acfg,
                                      derive_seed(master, "cycle", l), use_kmeans,
                                      config.discovery.kmeans_k);
        state = std::move(cycle.state);

        bool committed = false;
        for (const auto& report : cycle.reports) {
            append_audit(audit_path, report);
            if (report.outcome == UpdateOutcome::Accepted && report.candidate) {
                ++result.commits;
                committed = true;
                if (report.candidate->majority_truth != kUnknownSourceId) {
                    result.discovered_to_truth[report.candidate->provisional_id] =
                        report.candidate->majority_truth;
                }
            }
        }
        if (committed) {
            save_state(result.run_dir / "state" / ("step-" + std::to_string(state.step)),
                       state);
        }

        introduced.push_back(step.introduced_source);
        result.steps.push_back(measure_step(state, scenario, result.discovered_to_truth,
                                            introduced, step.introduced_source,
                                            static_cast<int>(l)));
        write_step_metrics(
            result.run_dir / "metrics" / ("step-" + std::to_string(l) + ".csv"),
            result.steps.back());
    }

    result.summary = aggregate(result.steps);
    write_summary(result.run_dir / "summary.csv", result.summary);
    write_series(result.run_dir / "det_over_time.csv", result.steps, &StepMetrics::det_acc,
                 "det_acc");
    write_series(result.run_dir / "src_att_over_time.csv", result.steps,
                 &StepMetrics::att_acc, "att_acc");
    return result;
}

IndividualResult run_individual(const ExperimentConfig& config,
                                const std::filesystem::path& output_root,
                                bool skip_validation) {
    config.validate();
    const std::uint64_t master = config.run.seed;

    IndividualResult result;
    result.run_dir =
        output_root / "runs" / ("individual-seed" + std::to_string(master));
    std::filesystem::create_directories(result.run_dir);
    write_config(result.run_dir / "effective-config.toml", config);
    const auto audit_path = result.run_dir / "audit.jsonl";
    std::filesystem::remove(audit_path);

    ScenarioData scenario = load_scenario(config, output_root);

    AdaptationConfig acfg = config.adaptation();
    if (skip_validation) acfg.validate_updates = false;
    const ValidationCriteria criteria = config.criteria();
    const auto schedule = config.schedule();
    const bool use_kmeans = config.discovery.algorithm == "kmeans";

    const SystemState initial =
        initialize_state(scenario.known, acfg, derive_seed(master, "init"));

    for (std::size_t k = 0; k < scenario.emerging.size(); ++k) {
        const std::vector<LabeledDataset> single = {scenario.emerging[k]};
        const ObservationStream stream = build_stream(
            scenario.known, single, derive_seed(master, "individual-stream", k));
        const StreamStep& step = stream.steps[1];

        std::vector<int> truth_ids;
        for (const auto& label : step.truth) truth_ids.push_back(label.id);

        CycleResult cycle =
            run_cycle(initial, step.features, truth_ids, criteria, schedule,
                      config.discovery.sufficiency_threshold, acfg,
                      derive_seed(master, "individual-cycle", k), use_kmeans,
                      config.discovery.kmeans_k);
        std::map<int, int> mapping;
        for (const auto& report : cycle.reports) {
            append_audit(audit_path, report);
            if (report.outcome == UpdateOutcome::Accepted && report.candidate &&
                report.candidate->majority_truth != kUnknownSourceId) {
                mapping[report.candidate->provisional_id] = report.candidate->majority_truth;
            }
        }

        const int source_id = step.introduced_source;
        const StepMetrics row = measure_step(cycle.state, scenario, mapping, {source_id},
                                             source_id, static_cast<int>(k) + 1);
        IndividualRow out;
        out.source_id = source_id;
        out.det_acc = row.new_det_acc.value_or(0.0);
        out.det_auc = row.new_det_auc.value_or(0.0);
        out.att_acc = row.new_att_acc.value_or(0.0);
        result.rows.push_back(out);
    }

    IndividualRow average;
    average.source_id = kUnknownSourceId;
    for (const auto& row : result.rows) {
        average.det_acc += row.det_acc;
        average.det_auc += row.det_auc;
        average.att_acc += row.att_acc;
    }
    if (!result.rows.empty()) {
        const auto n = static_cast<double>(result.rows.size());
        average.det_acc /= n;
        average.det_auc /= n;
        average.att_acc /= n;
        result.rows.push_back(average);
    }

    std::ofstream out(result.run_dir / "individual.csv");
    if (!out) throw IoError("cannot write individual.csv");
    out << "source,det_acc,det_auc,att_acc\n";
    for (const auto& row : result.rows) {
        out << (row.source_id == kUnknownSourceId ? std::string("average")
                                                  : std::to_string(row.source_id))
            << ',' << format_double(row.det_acc) << ',' << format_double(row.det_auc) << ','
            << format_double(row.att_acc) << '\n';
    }
    return result;
}

ExperimentConfig apply_variant(const ExperimentConfig& config, const std::string& variant) {
    ExperimentConfig out = config;
    if (variant == "proposed") {
        return out;
    } else if (variant == "kmeans") {
        out.discovery.algorithm = "kmeans";
    } else if (variant == "no_preservation") {
        out.train.lambda = 0.0;
    } else if (variant == "overly_preserved") {
        out.train.lambda = 5.0;
    } else if (variant == "no_validate") {
        out.validation.enabled = false;
    } else if (variant == "no_new_crit") {
        out.validation.min_att_new = 0.0;
    } else if (variant == "no_det_crit") {
        out.validation.min_detection = 0.0;
    } else if (variant == "no_att_crit") {
        out.validation.min_att_known = 0.0;
    } else {
        std::string known;
        for (const char* v : kAblationVariants) {
            if (!known.empty()) known += ", ";
            known += v;
        }
        throw ConfigError("unknown ablation variant '" + variant + "' (expected one of " +
                          known + ")");
    }
    return out;
}

AblationRow run_ablation(const ExperimentConfig& config,
                         const std::filesystem::path& output_root,
                         const std::string& variant) {
    const ExperimentConfig varied = apply_variant(config, variant);
    const SequentialResult sequential = run_sequential(
        varied, output_root,
        "ablate-" + variant + "-seed" + std::to_string(config.run.seed));
    AblationRow row;
    row.variant = variant;
    row.det_acc = sequential.summary.final.det_acc;
    row.att_acc = sequential.summary.final.att_acc;
    return row;
}

std::filesystem::path project_snapshot(const std::filesystem::path& snapshot_dir) {
    const auto source = snapshot_dir / "embeddings.csv";
    std::ifstream in(source);
    if (!in) throw IoError("no embeddings snapshot at " + source.string());

    std::string header;
    if (!std::getline(in, header)) throw ParseError("empty embeddings snapshot");
    std::vector<std::string> columns;
    {
        std::stringstream ss(header);
        std::string field;
        while (std::getline(ss, field, ',')) columns.push_back(field);
    }
    if (columns.size() < 3) throw ParseError("embeddings snapshot has too few columns");
    const auto dim = static_cast<Eigen::Index>(columns.size() - 2);

    std::vector<Eigen::VectorXd> rows;
    std::vector<std::string> labels;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        Eigen::VectorXd row(dim);
        for (Eigen::Index c = 0; c < dim; ++c) {
            if (!std::getline(ss, field, ',')) throw ParseError("short row in embeddings csv");
            row[c] = std::stod(field);
        }
        if (!std::getline(ss, field, ',')) throw ParseError("missing label column");
        labels.push_back(field);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ParseError("embeddings snapshot has no rows");

    Eigen::MatrixXd points(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        points.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    }
    const Eigen::RowVectorXd mean = points.colwise().mean();
    const Eigen::MatrixXd centered = points.rowwise() - mean;
    const Eigen::MatrixXd cov =
        centered.transpose() * centered / std::max<double>(1.0, points.rows() - 1.0);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    Eigen::MatrixXd axes = Eigen::MatrixXd::Zero(dim, 2);
    axes.col(0) = solver.eigenvectors().col(dim - 1);
    if (dim >= 2) axes.col(1) = solver.eigenvectors().col(dim - 2);
    // Sign convention: the largest-magnitude coordinate of each axis is
    // positive, so repeated runs emit identical files.
    for (int c = 0; c < 2; ++c) {
        Eigen::Index peak = 0;
        axes.col(c).cwiseAbs().maxCoeff(&peak);
        if (axes(peak, c) < 0.0) axes.col(c) = -axes.col(c);
    }

    const Eigen::MatrixXd projected = centered * axes;
    const auto target = snapshot_dir / "projection.csv";
    std::ofstream out(target);
    if (!out) throw IoError("cannot write " + target.string());
    out << "x,y,label\n";
    for (Eigen::Index i = 0; i < projected.rows(); ++i) {
        out << format_double(projected(i, 0)) << ',' << format_double(projected(i, 1)) << ','
            << labels[static_cast<std::size_t>(i)] << '\n';
    }
    return target;
}

SummaryTable report_from_run(const std::filesystem::path& run_dir) {
    const auto metrics_dir = run_dir / "metrics";
    if (!std::filesystem::exists(metrics_dir)) {
        throw IoError("no metrics directory under " + run_dir.string());
    }
    std::vector<StepMetrics> rows;
    for (int step = 0;; ++step) {
        const auto path = metrics_dir / ("step-" + std::to_string(step) + ".csv");
        if (!std::filesystem::exists(path)) break;
        rows.push_back(read_step_metrics(path));
    }
    if (rows.empty()) throw IoError("no per-step metrics found in " + metrics_dir.string());
    return aggregate(rows);
}

}  // namespace srcattr
