#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "srcattr/config.hpp"
#include "srcattr/experiments.hpp"

namespace {

using namespace srcattr;

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string output_root;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("-c,--config", args.config_path, "Configuration file (TOML-like)");
    cmd->add_option("-O,--override", args.overrides,
                    "Override a config value as section.key=value (repeatable)");
    cmd->add_option("-o,--out", args.output_root,
                    "Output root (overrides SRCATTR_OUTPUT_ROOT and run.output_dir)");
}

ExperimentConfig resolve_config(const CommonArgs& args) {
    ExperimentConfig config =
        args.config_path.empty() ? default_config() : load_config(args.config_path);
    for (const auto& assignment : args.overrides) {
        apply_override(config, assignment);
    }
    config.validate();
    return config;
}

std::filesystem::path resolve_output_root(const CommonArgs& args,
                                          const ExperimentConfig& config) {
    if (!args.output_root.empty()) return args.output_root;
    if (const char* env = std::getenv("SRCATTR_OUTPUT_ROOT"); env && *env) return env;
    return config.run.output_dir;
}

void print_summary(const SummaryTable& summary) {
    auto line = [](const char* group, const MetricTriple& t) {
        std::cout << group << ": det_acc=" << t.det_acc << " det_auc=" << t.det_auc
                  << " att_acc=" << t.att_acc << '\n';
    };
    line("initial", summary.initial);
    if (summary.average_new) {
        line("average_new_sources", *summary.average_new);
    } else {
        std::cout << "average_new_sources: na\n";
    }
    line("final", summary.final);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-adaptive open-set source attribution engine"};
    app.require_subcommand(1);

    CommonArgs gen_args;
    auto* gen = app.add_subcommand("gen-data", "Synthesize the dataset CSVs and manifest");
    add_common(gen, gen_args);

    CommonArgs seq_args;
    auto* seq = app.add_subcommand("run-sequential",
                                   "Adapt to every emerging source in sequence");
    add_common(seq, seq_args);

    CommonArgs ind_args;
    bool skip_validation = false;
    auto* ind = app.add_subcommand("run-individual",
                                   "Adapt to each emerging source in isolation");
    add_common(ind, ind_args);
    ind->add_flag("--skip-validation", skip_validation,
                  "Commit the best candidate without running the validation gate");

    CommonArgs abl_args;
    std::string variant = "all";
    auto* abl = app.add_subcommand("ablate", "Run a design-variant comparison");
    add_common(abl, abl_args);
    abl->add_option("--variant", variant,
                    "Variant name (see docs) or 'all' for the full sweep");

    std::string snapshot_dir;
    auto* proj = app.add_subcommand("project",
                                    "Export a 2-D projection of a state snapshot");
    proj->add_option("--state", snapshot_dir, "State snapshot directory")->required();

    std::string run_dir;
    auto* rep = app.add_subcommand("report", "Rebuild the summary table from per-step metrics");
    rep->add_option("--run", run_dir, "Run directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            const auto config = resolve_config(gen_args);
            const auto dir = gen_data(config, resolve_output_root(gen_args, config));
            std::cout << "wrote datasets to " << dir.string() << '\n';
        } else if (seq->parsed()) {
            const auto config = resolve_config(seq_args);
            const auto result = run_sequential(config, resolve_output_root(seq_args, config));
            std::cout << "run directory: " << result.run_dir.string() << '\n';
            print_summary(result.summary);
        } else if (ind->parsed()) {
            const auto config = resolve_config(ind_args);
            const auto result =
                run_individual(config, resolve_output_root(ind_args, config), skip_validation);
            std::cout << "run directory: " << result.run_dir.string() << '\n';
            for (const auto& row : result.rows) {
                std::cout << (row.source_id == kUnknownSourceId
                                  ? std::string("average")
                                  : "source " + std::to_string(row.source_id))
                          << ": det_acc=" << row.det_acc << " det_auc=" << row.det_auc
                          << " att_acc=" << row.att_acc << '\n';
            }
        } else if (abl->parsed()) {
            const auto config = resolve_config(abl_args);
            const auto root = resolve_output_root(abl_args, config);
            std::vector<std::string> variants;
            if (variant == "all") {
                variants.assign(std::begin(kAblationVariants), std::end(kAblationVariants));
            } else {
                variants.push_back(variant);
            }
            std::filesystem::create_directories(root / "runs");
            const auto table_path =
                root / "runs" / ("ablation-seed" + std::to_string(config.run.seed) + ".csv");
            std::ofstream table(table_path);
            table << "variant,det_acc,att_acc\n";
            for (const auto& v : variants) {
                const AblationRow row = run_ablation(config, root, v);
                table << row.variant << ',' << row.det_acc << ',' << row.att_acc << '\n';
                std::cout << row.variant << ": det_acc=" << row.det_acc
                          << " att_acc=" << row.att_acc << '\n';
            }
            std::cout << "wrote " << table_path.string() << '\n';
        } else if (proj->parsed()) {
            const auto target = project_snapshot(snapshot_dir);
            std::cout << "wrote " << target.string() << '\n';
        } else if (rep->parsed()) {
            print_summary(report_from_run(run_dir));
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
