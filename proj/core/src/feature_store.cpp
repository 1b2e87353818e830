#include "srcattr/feature_store.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "srcattr/rng.hpp"

namespace srcattr {

namespace {

using nlohmann::json;

double parse_double(const std::string& text, const std::string& context) {
    double value = 0.0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end) {
        throw ParseError("unparseable number '" + text + "' in " + context);
    }
    if (!std::isfinite(value)) {
        throw ParseError("non-finite value '" + text + "' in " + context);
    }
    return value;
}

int parse_int(const std::string& text, const std::string& context) {
    int value = 0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end) {
        throw ParseError("unparseable integer '" + text + "' in " + context);
    }
    return value;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

std::string format_double(double value) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    (void)ec;
    return std::string(buf, ptr);
}

Eigen::MatrixXd cov_from_json(const json& j, int dim, const std::string& context) {
    // Accepts scalar (s * I), vector (diagonal) or full row-major matrix.
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
    if (j.is_number()) {
        cov = j.get<double>() * Eigen::MatrixXd::Identity(dim, dim);
    } else if (j.is_array() && !j.empty() && j.front().is_number()) {
        if (static_cast<int>(j.size()) != dim) {
            throw ParseError("diagonal covariance of wrong size in " + context);
        }
        for (int i = 0; i < dim; ++i) cov(i, i) = j[i].get<double>();
    } else if (j.is_array()) {
        if (static_cast<int>(j.size()) != dim) {
            throw ParseError("covariance of wrong size in " + context);
        }
        for (int r = 0; r < dim; ++r) {
            if (static_cast<int>(j[r].size()) != dim) {
                throw ParseError("covariance row of wrong size in " + context);
            }
            for (int c = 0; c < dim; ++c) cov(r, c) = j[r][c].get<double>();
        }
    } else {
        throw ParseError("unsupported covariance encoding in " + context);
    }
    return cov;
}

json cov_to_json(const Eigen::MatrixXd& cov) {
    const Eigen::Index dim = cov.rows();
    bool diagonal = true;
    for (Eigen::Index r = 0; r < dim && diagonal; ++r) {
        for (Eigen::Index c = 0; c < dim && diagonal; ++c) {
            if (r != c && cov(r, c) != 0.0) diagonal = false;
        }
    }
    if (diagonal) {
        json diag = json::array();
        for (Eigen::Index i = 0; i < dim; ++i) diag.push_back(cov(i, i));
        return diag;
    }
    json full = json::array();
    for (Eigen::Index r = 0; r < dim; ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < dim; ++c) row.push_back(cov(r, c));
        full.push_back(row);
    }
    return full;
}

}  // namespace

std::string to_string(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Observation: return "observation";
        case Split::Test: return "test";
    }
    throw ConfigError("unhandled split tag");
}

Split split_from_string(const std::string& text) {
    if (text == "train") return Split::Train;
    if (text == "val") return Split::Val;
    if (text == "observation") return Split::Observation;
    if (text == "test") return Split::Test;
    throw ParseError("unknown split tag '" + text + "'");
}

std::string to_string(SourceKind kind) {
    switch (kind) {
        case SourceKind::Real: return "real";
        case SourceKind::SyntheticKnown: return "synthetic-known";
        case SourceKind::SyntheticDiscovered: return "synthetic-discovered";
        case SourceKind::Unknown: return "unknown";
    }
    throw ConfigError("unhandled source kind");
}

SourceKind source_kind_from_string(const std::string& text) {
    if (text == "real") return SourceKind::Real;
    if (text == "synthetic-known") return SourceKind::SyntheticKnown;
    if (text == "synthetic-discovered") return SourceKind::SyntheticDiscovered;
    if (text == "unknown") return SourceKind::Unknown;
    throw ParseError("unknown source kind '" + text + "'");
}

void LabeledDataset::append(const LabeledDataset& other) {
    if (other.size() == 0) return;
    if (size() == 0) {
        *this = other;
        return;
    }
    if (other.dim() != dim()) {
        throw DimensionError("cannot append dataset of dimension " +
                             std::to_string(other.dim()) + " to dimension " +
                             std::to_string(dim()));
    }
    const Eigen::Index old_rows = features.rows();
    features.conservativeResize(old_rows + other.features.rows(), Eigen::NoChange);
    features.bottomRows(other.features.rows()) = other.features;
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
    splits.insert(splits.end(), other.splits.begin(), other.splits.end());
}

void LabeledDataset::append_row(const Eigen::VectorXd& row, SourceLabel label, Split split) {
    if (size() != 0 && row.size() != dim()) {
        throw DimensionError("row dimension " + std::to_string(row.size()) +
                             " does not match dataset dimension " + std::to_string(dim()));
    }
    const Eigen::Index old_rows = features.rows();
    if (old_rows == 0) {
        features.resize(1, row.size());
    } else {
        features.conservativeResize(old_rows + 1, Eigen::NoChange);
    }
    features.row(old_rows) = row.transpose();
    labels.push_back(label);
    splits.push_back(split);
}

LabeledDataset LabeledDataset::subset(Split split) const {
    LabeledDataset out;
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < size(); ++i) {
        if (splits[static_cast<std::size_t>(i)] == split) rows.push_back(i);
    }
    out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.features.row(static_cast<Eigen::Index>(i)) = features.row(rows[i]);
        out.labels.push_back(labels[static_cast<std::size_t>(rows[i])]);
        out.splits.push_back(split);
    }
    return out;
}

LabeledDataset LabeledDataset::subset_by_source(int source_id) const {
    LabeledDataset out;
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < size(); ++i) {
        if (labels[static_cast<std::size_t>(i)].id == source_id) rows.push_back(i);
    }
    out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.features.row(static_cast<Eigen::Index>(i)) = features.row(rows[i]);
        out.labels.push_back(labels[static_cast<std::size_t>(rows[i])]);
        out.splits.push_back(splits[static_cast<std::size_t>(rows[i])]);
    }
    return out;
}

std::vector<int> LabeledDataset::source_ids() const {
    std::set<int> ids;
    for (const auto& label : labels) ids.insert(label.id);
    return {ids.begin(), ids.end()};
}

void SyntheticSourceSpec::validate() const {
    if (means.empty()) throw ModelError("source spec has no components");
    if (means.size() != covariances.size() ||
        static_cast<Eigen::Index>(means.size()) != weights.size()) {
        throw ModelError("source spec component lists disagree in length");
    }
    if (std::abs(weights.sum() - 1.0) > 1e-9) {
        throw ModelError("component weights do not sum to 1");
    }
    const int d = dim();
    for (std::size_t i = 0; i < means.size(); ++i) {
        if (means[i].size() != d || covariances[i].rows() != d || covariances[i].cols() != d) {
            throw ModelError("component dimension mismatch in source spec");
        }
        if (weights[static_cast<Eigen::Index>(i)] < 0.0) {
            throw ModelError("negative component weight");
        }
        Eigen::LLT<Eigen::MatrixXd> llt(covariances[i]);
        if (llt.info() != Eigen::Success) {
            throw ModelError("component covariance is not positive definite");
        }
    }
}

std::vector<SyntheticSourceSpec> SourceManifest::known() const {
    std::vector<SyntheticSourceSpec> out;
    for (const auto& s : sources) {
        if (!s.emerging) out.push_back(s);
    }
    return out;
}

std::vector<SyntheticSourceSpec> SourceManifest::emerging() const {
    std::vector<SyntheticSourceSpec> out;
    for (const auto& s : sources) {
        if (s.emerging) out.push_back(s);
    }
    return out;
}

LabeledDataset load_features(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset file " + path.string());

    std::string header;
    if (!std::getline(in, header)) {
        throw ParseError("empty dataset file " + path.string());
    }
    const auto header_fields = split_csv_line(header);
    if (header_fields.size() < 3 || header_fields[header_fields.size() - 2] != "label" ||
        header_fields.back() != "split") {
        throw ParseError("bad header in " + path.string() +
                         " (expected f0..fN,label,split)");
    }
    const std::size_t dim = header_fields.size() - 2;

    std::vector<Eigen::VectorXd> rows;
    std::vector<SourceLabel> labels;
    std::vector<Split> splits;
    std::string line;
    std::size_t row_index = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::string context = path.string() + " row " + std::to_string(row_index);
        const auto fields = split_csv_line(line);
        if (fields.size() != dim + 2) {
            throw DimensionError("row has " + std::to_string(fields.size() - 2) +
                                 " features, expected " + std::to_string(dim) + " in " +
                                 context);
        }
        Eigen::VectorXd row(static_cast<Eigen::Index>(dim));
        for (std::size_t i = 0; i < dim; ++i) {
            row[static_cast<Eigen::Index>(i)] = parse_double(fields[i], context);
        }
        const int id = parse_int(fields[dim], context);
        const SourceKind kind = id == 0 ? SourceKind::Real : SourceKind::SyntheticKnown;
        rows.push_back(std::move(row));
        labels.push_back(SourceLabel{id, kind});
        splits.push_back(split_from_string(fields[dim + 1]));
        ++row_index;
    }
    if (rows.empty()) {
        throw ParseError("dataset file " + path.string() + " has no data rows");
    }

    LabeledDataset dataset;
    dataset.features.resize(static_cast<Eigen::Index>(rows.size()),
                            static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        dataset.features.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    }
    dataset.labels = std::move(labels);
    dataset.splits = std::move(splits);
    return dataset;
}

void write_features(const std::filesystem::path& path, const LabeledDataset& dataset) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write dataset file " + path.string());
    for (Eigen::Index c = 0; c < dataset.dim(); ++c) {
        out << 'f' << c << ',';
    }
    out << "label,split\n";
    for (Eigen::Index r = 0; r < dataset.size(); ++r) {
        for (Eigen::Index c = 0; c < dataset.dim(); ++c) {
            out << format_double(dataset.features(r, c)) << ',';
        }
        out << dataset.labels[static_cast<std::size_t>(r)].id << ','
            << to_string(dataset.splits[static_cast<std::size_t>(r)]) << '\n';
    }
}

LabeledDataset split_source(const Eigen::MatrixXd& items, SourceLabel label,
                            const SplitCounts& counts, std::uint64_t seed) {
    if (counts.train < 0 || counts.val < 0 || counts.observation < 0 || counts.test < 0) {
        throw ConfigError("split counts must be non-negative");
    }
    if (items.rows() < counts.total()) {
        throw CapacityError("need " + std::to_string(counts.total()) + " items, have " +
                            std::to_string(items.rows()) + " (short by " +
                            std::to_string(counts.total() - items.rows()) + ")");
    }
    const auto order = shuffled_indices(static_cast<std::size_t>(items.rows()), seed);

    LabeledDataset out;
    out.features.resize(counts.total(), items.cols());
    out.labels.reserve(static_cast<std::size_t>(counts.total()));
    out.splits.reserve(static_cast<std::size_t>(counts.total()));
    Eigen::Index cursor = 0;
    const std::pair<Split, Eigen::Index> plan[] = {
        {Split::Train, counts.train},
        {Split::Val, counts.val},
        {Split::Observation, counts.observation},
        {Split::Test, counts.test},
    };
    for (const auto& [split, count] : plan) {
        for (Eigen::Index i = 0; i < count; ++i, ++cursor) {
            out.features.row(cursor) =
                items.row(static_cast<Eigen::Index>(order[static_cast<std::size_t>(cursor)]));
            out.labels.push_back(label);
            out.splits.push_back(split);
        }
    }
    return out;
}

Eigen::MatrixXd synthesize_source(const SyntheticSourceSpec& spec, Eigen::Index n) {
    spec.validate();
    const int d = spec.dim();

    std::vector<Eigen::MatrixXd> chol;
    chol.reserve(spec.covariances.size());
    for (const auto& cov : spec.covariances) {
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        if (llt.info() != Eigen::Success) {
            throw ModelError("covariance factorization failed for source " +
                             std::to_string(spec.label.id));
        }
        chol.push_back(llt.matrixL());
    }

    Eigen::VectorXd cumulative(spec.weights.size());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < spec.weights.size(); ++i) {
        acc += spec.weights[i];
        cumulative[i] = acc;
    }

    Rng rng(spec.seed);
    Eigen::MatrixXd samples(n, d);
    Eigen::VectorXd z(d);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double u = rng.uniform01();
        Eigen::Index comp = 0;
        while (comp + 1 < cumulative.size() && u >= cumulative[comp]) ++comp;
        for (int k = 0; k < d; ++k) z[k] = rng.normal();
        samples.row(i) =
            (spec.means[static_cast<std::size_t>(comp)] + chol[static_cast<std::size_t>(comp)] * z)
                .transpose();
    }
    return samples;
}

ObservationStream build_stream(const LabeledDataset& known,
                               const std::vector<LabeledDataset>& emerging,
                               std::uint64_t seed) {
    const LabeledDataset known_obs = known.subset(Split::Observation);

    ObservationStream stream;
    stream.steps.push_back(StreamStep{});  // step 0: initialization marker only

    for (std::size_t e = 0; e < emerging.size(); ++e) {
        const LabeledDataset new_obs = emerging[e].subset(Split::Observation);
        if (new_obs.size() == 0) {
            throw CapacityError("emerging dataset " + std::to_string(e) +
                                " has an empty observation subset");
        }
        LabeledDataset merged = known_obs;
        merged.append(new_obs);

        const auto order = shuffled_indices(static_cast<std::size_t>(merged.size()),
                                            derive_seed(seed, "stream-step", e + 1));
        StreamStep step;
        step.features.resize(merged.size(), merged.dim());
        step.truth.reserve(static_cast<std::size_t>(merged.size()));
        for (std::size_t i = 0; i < order.size(); ++i) {
            step.features.row(static_cast<Eigen::Index>(i)) =
                merged.features.row(static_cast<Eigen::Index>(order[i]));
            step.truth.push_back(merged.labels[order[i]]);
        }
        step.introduced_source = new_obs.labels.front().id;
        stream.steps.push_back(std::move(step));
    }
    return stream;
}

SourceManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError("bad manifest JSON in " + path.string() + ": " + e.what());
    }

    SourceManifest manifest;
    manifest.dimension = doc.at("dimension").get<int>();
    for (const auto& js : doc.at("sources")) {
        const std::string context = "manifest source " + js.at("id").dump();
        SyntheticSourceSpec spec;
        spec.label.id = js.at("id").get<int>();
        spec.label.kind = source_kind_from_string(js.at("kind").get<std::string>());
        spec.emerging = js.at("emerging").get<bool>();
        spec.seed = js.at("seed").get<std::uint64_t>();
        for (const auto& jc : js.at("components")) {
            Eigen::VectorXd mean(manifest.dimension);
            if (static_cast<int>(jc.at("mean").size()) != manifest.dimension) {
                throw ParseError("mean of wrong dimension in " + context);
            }
            for (int i = 0; i < manifest.dimension; ++i) mean[i] = jc.at("mean")[i].get<double>();
            spec.means.push_back(std::move(mean));
            spec.covariances.push_back(cov_from_json(jc.at("cov"), manifest.dimension, context));
        }
        Eigen::VectorXd weights(static_cast<Eigen::Index>(spec.means.size()));
        if (js.at("weights").size() != spec.means.size()) {
            throw ParseError("weights of wrong length in " + context);
        }
        for (std::size_t i = 0; i < spec.means.size(); ++i) {
            weights[static_cast<Eigen::Index>(i)] = js.at("weights")[i].get<double>();
        }
        spec.weights = std::move(weights);
        spec.validate();
        manifest.sources.push_back(std::move(spec));
    }
    return manifest;
}

void write_manifest(const std::filesystem::path& path, const SourceManifest& manifest) {
    json doc;
    doc["dimension"] = manifest.dimension;
    doc["sources"] = json::array();
    for (const auto& spec : manifest.sources) {
        json js;
        js["id"] = spec.label.id;
        js["kind"] = to_string(spec.label.kind);
        js["emerging"] = spec.emerging;
        js["seed"] = spec.seed;
        js["components"] = json::array();
        for (std::size_t i = 0; i < spec.means.size(); ++i) {
            json jc;
            jc["mean"] = std::vector<double>(spec.means[i].data(),
                                             spec.means[i].data() + spec.means[i].size());
            jc["cov"] = cov_to_json(spec.covariances[i]);
            js["components"].push_back(std::move(jc));
        }
        js["weights"] = std::vector<double>(spec.weights.data(),
                                            spec.weights.data() + spec.weights.size());
        doc["sources"].push_back(std::move(js));
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest " + path.string());
    out << doc.dump(2) << '\n';
}

}  // namespace srcattr
