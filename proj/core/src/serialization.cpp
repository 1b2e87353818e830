#include "srcattr/serialization.hpp"

#include <charconv>
#include <fstream>

#include <nlohmann/json.hpp>

#include "srcattr/feature_store.hpp"

namespace srcattr {

namespace {

using nlohmann::json;

constexpr int kSnapshotVersion = 1;

std::string format_double(double value) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    (void)ec;
    return std::string(buf, ptr);
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    if (!j.is_array()) throw ParseError("expected a matrix (array of arrays)");
    const auto rows = static_cast<Eigen::Index>(j.size());
    if (rows == 0) return {};
    const auto cols = static_cast<Eigen::Index>(j.front().size());
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (static_cast<Eigen::Index>(j[static_cast<std::size_t>(r)].size()) != cols) {
            throw ParseError("ragged matrix rows");
        }
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
        }
    }
    return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vector_from_json(const json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        v[i] = j[static_cast<std::size_t>(i)].get<double>();
    }
    return v;
}

json label_to_json(const SourceLabel& label) {
    return json{{"id", label.id}, {"kind", to_string(label.kind)}};
}

SourceLabel label_from_json(const json& j) {
    return SourceLabel{j.at("id").get<int>(),
                       source_kind_from_string(j.at("kind").get<std::string>())};
}

json embedder_to_json(const EmbedderParams& params) {
    json doc;
    doc["version"] = kSnapshotVersion;
    doc["activation"] = params.activation;
    auto stack = [](const std::vector<Eigen::MatrixXd>& ws,
                    const std::vector<Eigen::VectorXd>& bs) {
        json layers = json::array();
        for (std::size_t l = 0; l < ws.size(); ++l) {
            layers.push_back(json{{"w", matrix_to_json(ws[l])}, {"b", vector_to_json(bs[l])}});
        }
        return layers;
    };
    doc["encoder"] = stack(params.enc_w, params.enc_b);
    doc["decoder"] = stack(params.dec_w, params.dec_b);
    return doc;
}

EmbedderParams embedder_from_json(const json& doc) {
    if (doc.at("version").get<int>() != kSnapshotVersion) {
        throw ParseError("unsupported embedder snapshot version");
    }
    EmbedderParams params;
    params.activation = doc.at("activation").get<std::string>();
    for (const auto& layer : doc.at("encoder")) {
        params.enc_w.push_back(matrix_from_json(layer.at("w")));
        params.enc_b.push_back(vector_from_json(layer.at("b")));
    }
    for (const auto& layer : doc.at("decoder")) {
        params.dec_w.push_back(matrix_from_json(layer.at("w")));
        params.dec_b.push_back(vector_from_json(layer.at("b")));
    }
    return params;
}

json attributor_to_json(const AttributorState& state) {
    json doc;
    doc["version"] = kSnapshotVersion;
    doc["tau_reject"] = state.tau_reject;
    doc["models"] = json::array();
    for (const auto& model : state.models) {
        json jm;
        jm["source"] = label_to_json(model.source);
        jm["weights"] = vector_to_json(model.weights);
        jm["means"] = json::array();
        jm["covariances"] = json::array();
        for (const auto& mean : model.means) jm["means"].push_back(vector_to_json(mean));
        for (const auto& cov : model.covariances) {
            jm["covariances"].push_back(matrix_to_json(cov));
        }
        doc["models"].push_back(std::move(jm));
    }
    return doc;
}

AttributorState attributor_from_json(const json& doc) {
    if (doc.at("version").get<int>() != kSnapshotVersion) {
        throw ParseError("unsupported attributor snapshot version");
    }
    AttributorState state;
    state.tau_reject = doc.at("tau_reject").get<double>();
    for (const auto& jm : doc.at("models")) {
        SourceModel model;
        model.source = label_from_json(jm.at("source"));
        model.weights = vector_from_json(jm.at("weights"));
        for (const auto& mean : jm.at("means")) model.means.push_back(vector_from_json(mean));
        for (const auto& cov : jm.at("covariances")) {
            model.covariances.push_back(matrix_from_json(cov));
        }
        state.models.push_back(std::move(model));
    }
    return state;
}

json dataset_to_json(const LabeledDataset& ds) {
    json doc;
    doc["features"] = matrix_to_json(ds.features);
    doc["labels"] = json::array();
    doc["splits"] = json::array();
    for (const auto& label : ds.labels) doc["labels"].push_back(label_to_json(label));
    for (const auto& split : ds.splits) doc["splits"].push_back(to_string(split));
    return doc;
}

json buffer_to_json(const Buffer& buffer) {
    json doc;
    doc["capacity"] = buffer.capacity() ? json(*buffer.capacity()) : json(nullptr);
    doc["entries"] = json::array();
    for (const auto& entry : buffer.entries()) {
        doc["entries"].push_back(json{{"phi", vector_to_json(entry.phi)},
                                      {"psi", vector_to_json(entry.psi)},
                                      {"step", entry.step},
                                      {"truth", entry.truth_id}});
    }
    return doc;
}

void write_json(const std::filesystem::path& path, const json& doc) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError("bad JSON in " + path.string() + ": " + e.what());
    }
}

}  // namespace

void save_embedder(const std::filesystem::path& path, const EmbedderParams& params) {
    write_json(path, embedder_to_json(params));
}

EmbedderParams load_embedder(const std::filesystem::path& path) {
    return embedder_from_json(read_json(path));
}

void save_attributor(const std::filesystem::path& path, const AttributorState& state) {
    write_json(path, attributor_to_json(state));
}

AttributorState load_attributor(const std::filesystem::path& path) {
    return attributor_from_json(read_json(path));
}

void save_state(const std::filesystem::path& dir, const SystemState& state) {
    std::filesystem::create_directories(dir);
    json meta;
    meta["version"] = kSnapshotVersion;
    meta["step"] = state.step;
    meta["next_discovered_id"] = state.next_discovered_id;
    meta["sources"] = json::array();
    for (const auto& source : state.sources) meta["sources"].push_back(label_to_json(source));
    meta["buffer"] = buffer_to_json(state.buffer);
    write_json(dir / "meta.json", meta);

    save_embedder(dir / "embedder.json", state.embedder);
    save_attributor(dir / "attributor.json", state.attributor);
    write_features(dir / "train.csv", state.train_ledger);
    write_features(dir / "val.csv", state.val_ledger);

    // Buffer coordinates for offline inspection.
    {
        std::ofstream out(dir / "buffer.csv");
        if (!out) throw IoError("cannot write buffer snapshot in " + dir.string());
        const int edim = state.embedder.embedding_dim();
        for (int c = 0; c < edim; ++c) out << 'e' << c << ',';
        out << "step\n";
        for (const auto& entry : state.buffer.entries()) {
            for (Eigen::Index c = 0; c < entry.psi.size(); ++c) {
                out << format_double(entry.psi[c]) << ',';
            }
            out << entry.step << '\n';
        }
    }

    // Per-sample audit scores over the val ledger.
    {
        std::ofstream out(dir / "scores.csv");
        if (!out) throw IoError("cannot write scores snapshot in " + dir.string());
        out << "label,attributed,max_log_likelihood\n";
        if (state.val_ledger.size() > 0 && !state.attributor.models.empty()) {
            const BankScorer scorer(state.attributor);
            const Eigen::MatrixXd psi = encode_batch(state.embedder, state.val_ledger.features);
            for (Eigen::Index i = 0; i < psi.rows(); ++i) {
                const Embedding embedding = psi.row(i).transpose();
                out << state.val_ledger.labels[static_cast<std::size_t>(i)].id << ','
                    << scorer.attribute(embedding).id << ','
                    << format_double(scorer.max_score(embedding)) << '\n';
            }
        }
    }

    // Re-embedded ledgers for the 2-D projection export.
    {
        std::ofstream out(dir / "embeddings.csv");
        if (!out) throw IoError("cannot write embeddings snapshot in " + dir.string());
        const int edim = state.embedder.embedding_dim();
        for (int c = 0; c < edim; ++c) out << 'e' << c << ',';
        out << "label,ledger\n";
        auto dump = [&](const LabeledDataset& ds, const char* tag) {
            if (ds.size() == 0) return;
            const Eigen::MatrixXd psi = encode_batch(state.embedder, ds.features);
            for (Eigen::Index r = 0; r < psi.rows(); ++r) {
                for (Eigen::Index c = 0; c < psi.cols(); ++c) {
                    out << format_double(psi(r, c)) << ',';
                }
                out << ds.labels[static_cast<std::size_t>(r)].id << ',' << tag << '\n';
            }
        };
        dump(state.train_ledger, "train");
        dump(state.val_ledger, "val");
    }
}

SystemState load_state(const std::filesystem::path& dir) {
    const json meta = read_json(dir / "meta.json");
    if (meta.at("version").get<int>() != kSnapshotVersion) {
        throw ParseError("unsupported state snapshot version");
    }
    SystemState state;
    state.step = meta.at("step").get<int>();
    state.next_discovered_id = meta.at("next_discovered_id").get<int>();
    for (const auto& js : meta.at("sources")) state.sources.push_back(label_from_json(js));

    const json& jbuf = meta.at("buffer");
    if (!jbuf.at("capacity").is_null()) {
        state.buffer = Buffer(jbuf.at("capacity").get<std::size_t>());
    }
    for (const auto& je : jbuf.at("entries")) {
        state.buffer.push(vector_from_json(je.at("phi")), vector_from_json(je.at("psi")),
                          je.at("step").get<int>(), je.at("truth").get<int>());
    }

    state.embedder = load_embedder(dir / "embedder.json");
    state.attributor = load_attributor(dir / "attributor.json");

    auto read_ledger = [&](const char* name, Split split) {
        LabeledDataset ds = load_features(dir / name);
        for (auto& s : ds.splits) s = split;
        return ds;
    };
    state.train_ledger = read_ledger("train.csv", Split::Train);
    state.val_ledger = read_ledger("val.csv", Split::Val);

    // CSV labels only carry ids; restore kinds from the source table.
    for (auto& label : state.train_ledger.labels) {
        for (const auto& source : state.sources) {
            if (source.id == label.id) label = source;
        }
    }
    for (auto& label : state.val_ledger.labels) {
        for (const auto& source : state.sources) {
            if (source.id == label.id) label = source;
        }
    }
    return state;
}

std::string serialize_state_canonical(const SystemState& state) {
    json doc;
    doc["step"] = state.step;
    doc["next_discovered_id"] = state.next_discovered_id;
    doc["sources"] = json::array();
    for (const auto& source : state.sources) doc["sources"].push_back(label_to_json(source));
    doc["train"] = dataset_to_json(state.train_ledger);
    doc["val"] = dataset_to_json(state.val_ledger);
    doc["embedder"] = embedder_to_json(state.embedder);
    doc["attributor"] = attributor_to_json(state.attributor);
    doc["buffer"] = buffer_to_json(state.buffer);
    doc["pending_new"] =
        state.pending_new ? label_to_json(*state.pending_new) : json(nullptr);
    return doc.dump();
}

void append_audit(const std::filesystem::path& path, const UpdateReport& report) {
    json doc;
    doc["step"] = report.step;
    doc["outcome"] = to_string(report.outcome);
    if (report.candidate) {
        doc["candidate"] = {{"size", report.candidate->size},
                            {"eps", report.candidate->eps},
                            {"min_samples", report.candidate->min_samples},
                            {"provisional_id", report.candidate->provisional_id},
                            {"majority_truth", report.candidate->majority_truth},
                            {"purity", report.candidate->purity}};
    } else {
        doc["candidate"] = nullptr;
    }
    if (report.measured) {
        doc["measured"] = {{"detection_accuracy", report.measured->detection_accuracy},
                           {"attribution_known", report.measured->attribution_known},
                           {"attribution_new", report.measured->attribution_new}};
    } else {
        doc["measured"] = nullptr;
    }
    std::ofstream out(path, std::ios::app);
    if (!out) throw IoError("cannot append to audit log " + path.string());
    out << doc.dump() << '\n';
}

}  // namespace srcattr
