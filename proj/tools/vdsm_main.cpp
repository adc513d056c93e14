#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "vdsm/common.hpp"
#include "vdsm/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalidConfig = 2;
constexpr int kExitDataError = 3;
constexpr int kExitDivergence = 4;

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    std::int64_t seed = -1;
    int threads = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "experiment config JSON file");
    cmd->add_option("--set", args.overrides, "override a config field, key=value (repeatable)");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed, "run a single seed instead of the config list");
    cmd->add_option("--threads", args.threads, "worker threads for grid cells");
}

vdsm::ExperimentConfig build_config(const CommonArgs& args) {
    vdsm::ExperimentConfig cfg;
    if (!args.config_path.empty()) cfg = vdsm::ExperimentConfig::from_file(args.config_path);
    for (const std::string& o : args.overrides) cfg.apply_override(o);
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    if (args.seed >= 0) cfg.seeds = {static_cast<std::uint64_t>(args.seed)};
    cfg.validate();
    return cfg;
}

int run_train(const CommonArgs& args) {
    vdsm::ExperimentConfig cfg = build_config(args);
    vdsm::RunArtifact art = vdsm::train(cfg);
    std::cout << "report: " << art.report_csv_path << "\n";
    std::cout << art.report.to_table_text(vdsm::model_kind_name(cfg.model));
    if (art.diverged) {
        std::cerr << "training diverged; last finite checkpoint kept\n";
        return kExitDivergence;
    }
    return kExitOk;
}

int run_eval(const CommonArgs& args, const std::vector<std::string>& checkpoints) {
    vdsm::ExperimentConfig cfg = build_config(args);
    if (checkpoints.empty()) throw std::invalid_argument("eval: at least one --checkpoint");
    vdsm::DataWithLabels data = vdsm::load_dataset(cfg);
    std::vector<vdsm::ModelBundle> bundles;
    for (const std::string& path : checkpoints)
        bundles.push_back(vdsm::ModelBundle::load(path));
    vdsm::EvalReport report = vdsm::evaluate(bundles, data.data, cfg, vdsm::SplitChoice::test);
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream(cfg.out_dir + "/report.csv") << report.to_csv();
    std::ofstream(cfg.out_dir + "/report.txt")
        << report.to_table_text(vdsm::model_kind_name(cfg.model));
    std::cout << report.to_table_text(vdsm::model_kind_name(cfg.model));
    return kExitOk;
}

int run_grid(const CommonArgs& args, const std::string& grid_path) {
    vdsm::ExperimentConfig cfg = build_config(args);
    std::map<std::string, std::vector<nlohmann::json>> grid;
    if (grid_path.empty()) {
        grid["k"] = {4, 6, 8};
        grid["discount"] = {0.5, 0.75, 1.0};
        grid["lr"] = {1e-3, 1e-4};
    } else {
        std::ifstream in(grid_path);
        if (!in) throw std::invalid_argument("grid: cannot open '" + grid_path + "'");
        nlohmann::json gj;
        in >> gj;
        for (auto& [key, values] : gj.items())
            grid[key] = values.get<std::vector<nlohmann::json>>();
    }
    vdsm::GridResult result = vdsm::grid_search(cfg, grid, std::max(1, args.threads));
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream(cfg.out_dir + "/grid.csv") << vdsm::grid_to_csv(result);
    std::ofstream(cfg.out_dir + "/best_config.json") << result.best.canonical_text() << "\n";
    std::cout << "best score (val C^td @ 50%): " << result.ranked.front().score << "\n";
    std::cout << "best config written to " << cfg.out_dir + "/best_config.json" << "\n";
    return kExitOk;
}

int run_synth(const CommonArgs& args) {
    vdsm::ExperimentConfig cfg = build_config(args);
    vdsm::SyntheticData data =
        vdsm::generate_synthetic(cfg.synthetic, cfg.synthetic_n, cfg.synthetic_seed);
    std::filesystem::create_directories(cfg.out_dir);
    const std::string records_path = cfg.out_dir + "/synthetic.csv";
    const std::string labels_path = cfg.out_dir + "/synthetic_labels.csv";
    vdsm::save_records_csv(records_path, data.records);
    vdsm::save_labels_csv(labels_path, data.labels);
    std::cout << "wrote " << records_path << " and " << labels_path << "\n";
    return kExitOk;
}

int run_export(const CommonArgs& args, const std::string& checkpoint) {
    vdsm::ExperimentConfig cfg = build_config(args);
    if (checkpoint.empty()) throw std::invalid_argument("export-latent: --checkpoint required");
    vdsm::DataWithLabels data = vdsm::load_dataset(cfg);
    vdsm::ModelBundle bundle = vdsm::ModelBundle::load(checkpoint);
    std::filesystem::create_directories(cfg.out_dir);
    const std::string path = vdsm::export_latent(bundle, data.data, cfg.out_dir + "/latent.csv");
    std::cout << "wrote " << path << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Survival mixture models with variational latent clustering"};
    app.require_subcommand(1);

    CommonArgs train_args, eval_args, grid_args, synth_args, export_args;
    std::vector<std::string> eval_checkpoints;
    std::string grid_path, export_checkpoint;

    CLI::App* train_cmd = app.add_subcommand("train", "train and evaluate over the seed list");
    add_common(train_cmd, train_args);

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate saved checkpoints");
    add_common(eval_cmd, eval_args);
    eval_cmd->add_option("--checkpoint", eval_checkpoints, "checkpoint file (repeatable)");

    CLI::App* grid_cmd = app.add_subcommand("grid", "hyper-parameter grid search");
    add_common(grid_cmd, grid_args);
    grid_cmd->add_option("--grid", grid_path, "JSON file of field -> value list");

    CLI::App* synth_cmd = app.add_subcommand("synth", "write a synthetic dataset + labels");
    add_common(synth_cmd, synth_args);

    CLI::App* export_cmd = app.add_subcommand("export-latent", "write per-record posteriors");
    add_common(export_cmd, export_args);
    export_cmd->add_option("--checkpoint", export_checkpoint, "checkpoint file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInvalidConfig;
    }

    try {
        if (train_cmd->parsed()) return run_train(train_args);
        if (eval_cmd->parsed()) return run_eval(eval_args, eval_checkpoints);
        if (grid_cmd->parsed()) return run_grid(grid_args, grid_path);
        if (synth_cmd->parsed()) return run_synth(synth_args);
        if (export_cmd->parsed()) return run_export(export_args, export_checkpoint);
    } catch (const vdsm::IngestionError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitDataError;
    } catch (const vdsm::TrainingDivergence& e) {
        std::cerr << "training divergence: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid config: " << e.what() << "\n";
        return kExitInvalidConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
