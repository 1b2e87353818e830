#include "srcattr/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace srcattr {

namespace {

std::string trim(const std::string& text) {
    const auto begin = text.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return {};
    const auto end = text.find_last_not_of(" \t\r");
    return text.substr(begin, end - begin + 1);
}

std::string format_double(double value) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    (void)ec;
    return std::string(buf, ptr);
}

/// Field registry: every key knows how to parse into and print from the
/// config, which keeps load, override and echo in lockstep.
struct Field {
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T>
T parse_number(const std::string& text, const std::string& key) {
    if constexpr (std::is_floating_point_v<T>) {
        double value = 0.0;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
        if (ec != std::errc{} || ptr != text.data() + text.size()) {
            throw ConfigError("bad numeric value '" + text + "' for " + key);
        }
        return static_cast<T>(value);
    } else {
        long long value = 0;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
        if (ec != std::errc{} || ptr != text.data() + text.size()) {
            throw ConfigError("bad integer value '" + text + "' for " + key);
        }
        return static_cast<T>(value);
    }
}

bool parse_bool(const std::string& text, const std::string& key) {
    if (text == "true") return true;
    if (text == "false") return false;
    throw ConfigError("bad boolean value '" + text + "' for " + key);
}

std::map<std::string, Field> field_registry() {
    std::map<std::string, Field> fields;

    auto number = [&fields](const std::string& key, auto accessor) {
        using T = std::remove_reference_t<decltype(accessor(std::declval<ExperimentConfig&>()))>;
        fields[key] = Field{
            [accessor, key](ExperimentConfig& c, const std::string& v) {
                accessor(c) = parse_number<T>(v, key);
            },
            [accessor](const ExperimentConfig& c) {
                const T v = accessor(const_cast<ExperimentConfig&>(c));
                if constexpr (std::is_floating_point_v<T>) {
                    return format_double(v);
                } else {
                    return std::to_string(v);
                }
            }};
    };
    auto boolean = [&fields](const std::string& key, auto accessor) {
        fields[key] = Field{
            [accessor, key](ExperimentConfig& c, const std::string& v) {
                accessor(c) = parse_bool(v, key);
            },
            [accessor](const ExperimentConfig& c) -> std::string {
                return accessor(const_cast<ExperimentConfig&>(c)) ? "true" : "false";
            }};
    };
    auto text = [&fields](const std::string& key, auto accessor) {
        fields[key] = Field{
            [accessor](ExperimentConfig& c, const std::string& v) { accessor(c) = v; },
            [accessor](const ExperimentConfig& c) -> std::string {
                return accessor(const_cast<ExperimentConfig&>(c));
            }};
    };

    number("data.dimension", [](ExperimentConfig& c) -> int& { return c.data.dimension; });
    number("data.known_sources",
           [](ExperimentConfig& c) -> int& { return c.data.known_sources; });
    number("data.emerging_sources",
           [](ExperimentConfig& c) -> int& { return c.data.emerging_sources; });
    number("data.train_count",
           [](ExperimentConfig& c) -> Eigen::Index& { return c.data.train_count; });
    number("data.val_count",
           [](ExperimentConfig& c) -> Eigen::Index& { return c.data.val_count; });
    number("data.observation_count",
           [](ExperimentConfig& c) -> Eigen::Index& { return c.data.observation_count; });
    number("data.test_count",
           [](ExperimentConfig& c) -> Eigen::Index& { return c.data.test_count; });
    number("data.emerging_observation_count",
           [](ExperimentConfig& c) -> Eigen::Index& { return c.data.emerging_observation_count; });
    number("data.emerging_test_count",
           [](ExperimentConfig& c) -> Eigen::Index& { return c.data.emerging_test_count; });
    number("data.components_per_source",
           [](ExperimentConfig& c) -> int& { return c.data.components_per_source; });
    number("data.center_scale",
           [](ExperimentConfig& c) -> double& { return c.data.center_scale; });
    number("data.component_spread",
           [](ExperimentConfig& c) -> double& { return c.data.component_spread; });
    number("data.within_scale",
           [](ExperimentConfig& c) -> double& { return c.data.within_scale; });
    text("data.manifest", [](auto& c) -> std::string& { return c.data.manifest; });
    text("data.data_dir", [](auto& c) -> std::string& { return c.data.data_dir; });

    number("embedder.embedding_dim",
           [](ExperimentConfig& c) -> int& { return c.arch.embedding_dim; });
    fields["embedder.hidden"] = Field{
        [](ExperimentConfig& c, const std::string& v) {
            c.arch.hidden.clear();
            std::stringstream ss(v);
            std::string item;
            while (std::getline(ss, item, ',')) {
                item = trim(item);
                if (item.empty()) continue;
                c.arch.hidden.push_back(parse_number<int>(item, "embedder.hidden"));
            }
        },
        [](const ExperimentConfig& c) {
            std::string out;
            for (std::size_t i = 0; i < c.arch.hidden.size(); ++i) {
                if (i > 0) out += ',';
                out += std::to_string(c.arch.hidden[i]);
            }
            return out;
        }};
    number("embedder.learning_rate",
           [](ExperimentConfig& c) -> double& { return c.train.learning_rate; });
    number("embedder.weight_decay",
           [](ExperimentConfig& c) -> double& { return c.train.weight_decay; });
    number("embedder.epochs", [](ExperimentConfig& c) -> int& { return c.train.epochs; });
    number("embedder.batch_size",
           [](ExperimentConfig& c) -> int& { return c.train.batch_size; });
    number("embedder.hardest_k",
           [](ExperimentConfig& c) -> int& { return c.train.hardest_k; });
    number("embedder.margin", [](ExperimentConfig& c) -> double& { return c.train.margin; });
    number("embedder.lambda", [](ExperimentConfig& c) -> double& { return c.train.lambda; });
    number("embedder.patience", [](ExperimentConfig& c) -> int& { return c.train.patience; });

    number("attributor.components",
           [](ExperimentConfig& c) -> int& { return c.gmm_components; });
    number("attributor.covariance_epsilon",
           [](ExperimentConfig& c) -> double& { return c.gmm.cov_epsilon; });
    number("attributor.em_tolerance",
           [](ExperimentConfig& c) -> double& { return c.gmm.tolerance; });
    number("attributor.em_max_iterations",
           [](ExperimentConfig& c) -> int& { return c.gmm.max_iterations; });
    number("attributor.restarts", [](ExperimentConfig& c) -> int& { return c.gmm.restarts; });

    number("discovery.min_samples",
           [](ExperimentConfig& c) -> int& { return c.discovery.min_samples; });
    number("discovery.eps_min",
           [](ExperimentConfig& c) -> double& { return c.discovery.eps_min; });
    number("discovery.eps_max",
           [](ExperimentConfig& c) -> double& { return c.discovery.eps_max; });
    number("discovery.eps_trials",
           [](ExperimentConfig& c) -> int& { return c.discovery.eps_trials; });
    number("discovery.sufficiency_threshold",
           [](ExperimentConfig& c) -> int& { return c.discovery.sufficiency_threshold; });
    number("discovery.buffer_capacity",
           [](ExperimentConfig& c) -> std::size_t& { return c.discovery.buffer_capacity; });
    text("discovery.buffer_policy",
         [](auto& c) -> std::string& { return c.discovery.buffer_policy; });
    text("discovery.algorithm", [](auto& c) -> std::string& { return c.discovery.algorithm; });
    number("discovery.kmeans_k",
           [](ExperimentConfig& c) -> int& { return c.discovery.kmeans_k; });

    number("adaptation.candidate_split",
           [](ExperimentConfig& c) -> double& { return c.candidate_split; });
    boolean("adaptation.warm_start",
            [](ExperimentConfig& c) -> bool& { return c.warm_start; });
    boolean("adaptation.validate_updates",
            [](ExperimentConfig& c) -> bool& { return c.validation.enabled; });
    number("adaptation.epsilon_att_known",
           [](ExperimentConfig& c) -> double& { return c.validation.min_att_known; });
    number("adaptation.epsilon_detection",
           [](ExperimentConfig& c) -> double& { return c.validation.min_detection; });
    number("adaptation.epsilon_att_new",
           [](ExperimentConfig& c) -> double& { return c.validation.min_att_new; });

    text("run.output_dir", [](auto& c) -> std::string& { return c.run.output_dir; });
    number("run.seed",
           [](ExperimentConfig& c) -> std::uint64_t& { return c.run.seed; });
    boolean("run.adaptation_enabled",
            [](ExperimentConfig& c) -> bool& { return c.run.adaptation_enabled; });

    return fields;
}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> registry = field_registry();
    return registry;
}

}  // namespace

void ExperimentConfig::validate() const {
    train.validate();
    if (data.dimension <= 0) throw ConfigError("data.dimension must be positive");
    if (data.known_sources < 1) throw ConfigError("need at least one known synthetic source");
    if (data.emerging_sources < 0) throw ConfigError("emerging source count must be >= 0");
    if (arch.embedding_dim <= 0) throw ConfigError("embedding dimension must be positive");
    if (gmm_components < 1) throw ConfigError("attributor.components must be >= 1");
    if (discovery.eps_trials < 1) throw ConfigError("discovery.eps_trials must be >= 1");
    if (discovery.eps_min <= 0 || discovery.eps_max < discovery.eps_min) {
        throw ConfigError("bad discovery eps range");
    }
    if (discovery.buffer_policy != "retain" && discovery.buffer_policy != "clear") {
        throw ConfigError("discovery.buffer_policy must be 'retain' or 'clear'");
    }
    if (discovery.algorithm != "dbscan" && discovery.algorithm != "kmeans") {
        throw ConfigError("discovery.algorithm must be 'dbscan' or 'kmeans'");
    }
    if (candidate_split <= 0.0 || candidate_split >= 1.0) {
        throw ConfigError("adaptation.candidate_split must lie in (0, 1)");
    }
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in_unit(validation.min_att_known) || !in_unit(validation.min_detection) ||
        !in_unit(validation.min_att_new)) {
        throw ConfigError("validation thresholds must lie in [0, 1]");
    }
}

ValidationCriteria ExperimentConfig::criteria() const {
    return ValidationCriteria{validation.min_att_known, validation.min_detection,
                              validation.min_att_new};
}

AdaptationConfig ExperimentConfig::adaptation() const {
    AdaptationConfig out;
    out.arch = arch;
    out.arch.input_dim = data.dimension;
    out.train = train;
    out.gmm_components = gmm_components;
    out.gmm = gmm;
    out.candidate_split = candidate_split;
    out.warm_start = warm_start;
    out.validate_updates = validation.enabled;
    out.buffer_policy = discovery.buffer_policy == "clear" ? BufferPolicy::ClearAll
                                                           : BufferPolicy::RetainOthers;
    return out;
}

std::vector<ClusteringParams> ExperimentConfig::schedule() const {
    return make_eps_schedule(discovery.eps_min, discovery.eps_max, discovery.eps_trials,
                             discovery.min_samples);
}

ExperimentConfig default_config() { return ExperimentConfig{}; }

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());

    ExperimentConfig config = default_config();
    std::string line;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto comment = line.find('#');
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError("unterminated section header at line " +
                                  std::to_string(line_no));
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("expected key = value at line " + std::to_string(line_no));
        }
        const std::string key = section + "." + trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = fields().find(key);
        if (it == fields().end()) {
            throw ConfigError("unknown config key '" + key + "'");
        }
        it->second.set(config, value);
    }
    config.validate();
    return config;
}

void apply_override(ExperimentConfig& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw ConfigError("override must look like section.key=value");
    }
    const std::string key = trim(assignment.substr(0, eq));
    const std::string value = trim(assignment.substr(eq + 1));
    const auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(config, value);
}

void write_config(const std::filesystem::path& path, const ExperimentConfig& config) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write config file " + path.string());
    std::string current_section;
    for (const auto& [key, field] : fields()) {
        const auto dot = key.find('.');
        const std::string section = key.substr(0, dot);
        if (section != current_section) {
            if (!current_section.empty()) out << '\n';
            out << '[' << section << "]\n";
            current_section = section;
        }
        out << key.substr(dot + 1) << " = " << field.get(config) << '\n';
    }
}

}  // namespace srcattr
