// fundus command-line entry point:
//   fundus <generate|train|sweep|analyze|classify|report>
//          --config <path> [--run-dir <path>] [--preset paper|desk] [--seed N]

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "fundus/pipeline/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string run_dir;
    std::string preset = "desk";
    long seed = -1;
};

fundus::RunConfig load_config(const CommonArgs& args) {
    fundus::RunConfig cfg = fundus::RunConfig::preset(args.preset);
    if (!args.config_path.empty())
        cfg.apply_document(fundus::parse_config_file(args.config_path));
    cfg.apply_env();
    if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
    cfg.validate();
    return cfg;
}

fs::path resolve_run_dir(const CommonArgs& args, const fundus::RunConfig& cfg) {
    if (!args.run_dir.empty()) return args.run_dir;
    return fs::path(cfg.output_root) / "run";
}

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "run config file (TOML-style)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--run-dir", args.run_dir, "run directory (default <output_root>/run)");
    cmd->add_option("--preset", args.preset, "base preset: paper or desk")
        ->check(CLI::IsMember({"paper", "desk"}));
    cmd->add_option("--seed", args.seed, "override the global seed");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"unsupervised optic-disc representation pipeline"};
    app.require_subcommand(1);
    CommonArgs args;

    auto* generate = app.add_subcommand("generate", "render the synthetic dataset");
    auto* train = app.add_subcommand("train", "train the first latent size of the sweep set");
    auto* sweep = app.add_subcommand("sweep", "train a checkpoint per latent size");
    auto* analyze = app.add_subcommand("analyze", "latent ranking, top-k selection, UMAP plots");
    auto* classify = app.add_subcommand("classify", "SVC cross-validation and ROC/metric trends");
    auto* report = app.add_subcommand("report", "write the run summary markdown");
    for (auto* cmd : {generate, train, sweep, analyze, classify, report}) add_common(cmd, args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (report->parsed()) {
            // reporting only reads artifacts; no config validation needed
            fs::path run_dir = args.run_dir;
            if (run_dir.empty()) {
                fundus::RunConfig cfg = fundus::RunConfig::preset(args.preset);
                if (!args.config_path.empty())
                    cfg.apply_document(fundus::parse_config_file(args.config_path));
                cfg.apply_env();
                run_dir = resolve_run_dir(args, cfg);
            }
            const auto path = fundus::cmd_report(run_dir);
            std::cout << "report: " << path.string() << "\n";
            return 0;
        }

        const fundus::RunConfig cfg = load_config(args);
        const fs::path run_dir = resolve_run_dir(args, cfg);
        fundus::RunLock lock(run_dir);

        if (generate->parsed()) {
            const auto dir = fundus::cmd_generate(cfg, run_dir);
            std::cout << "dataset: " << dir.string() << "\n";
        } else if (train->parsed()) {
            fundus::cmd_train(cfg, run_dir);
            std::cout << "trained nl=" << cfg.vae.sweep.front() << " in " << run_dir.string()
                      << "\n";
        } else if (sweep->parsed()) {
            const auto rep = fundus::cmd_sweep(cfg, run_dir);
            int failed = 0;
            for (const auto& e : rep.entries) {
                std::cout << "nl=" << e.nl << ": "
                          << (e.ok ? "ok, mean ssim " + fundus::fmt_num(e.mean_ssim)
                                   : "failed: " + e.error)
                          << "\n";
                failed += !e.ok;
            }
            if (failed) {
                std::cerr << failed << " sweep entr" << (failed == 1 ? "y" : "ies") << " failed\n";
                return 1;
            }
        } else if (analyze->parsed()) {
            fundus::cmd_analyze(cfg, run_dir);
            std::cout << "analysis written under " << run_dir.string() << "\n";
        } else if (classify->parsed()) {
            fundus::cmd_classify(cfg, run_dir);
            std::cout << "classification written to " << (run_dir / "classify").string() << "\n";
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
