#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "diffsearch/config.hpp"
#include "diffsearch/plot.hpp"
#include "diffsearch/runner.hpp"

namespace {
constexpr const char* kVersion = "0.1.0";
}

int main(int argc, char** argv) {
    CLI::App app{"Inference-time search for diffusion sampling on analytic priors"};
    app.set_version_flag("--version", kVersion);

    std::string validate_path;
    app.add_option("--validate", validate_path,
                   "Parse and validate a config without running anything");

    std::string run_config;
    bool force = false;
    int workers = 0;
    CLI::App* run = app.add_subcommand("run", "Execute all (seed x method x budget) cells");
    run->add_option("config", run_config, "Experiment config (JSON)")->required();
    run->add_flag("--force", force, "Recompute cells that already have results");
    run->add_option("--workers", workers, "Worker threads (default: hardware)");

    std::string oracle_config;
    CLI::App* oracle = app.add_subcommand("oracle", "Write ground-truth fixtures");
    oracle->add_option("config", oracle_config, "Experiment config (JSON)")->required();

    std::string plot_dir, metric = "auto";
    CLI::App* plot = app.add_subcommand("plot", "Render SVG plots from a results directory");
    plot->add_option("dir", plot_dir, "Results directory")->required();
    plot->add_option("--metric", metric, "Record field for the y axis (default: task metric)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (!validate_path.empty()) {
            diffsearch::Experiment exp = diffsearch::load_experiment(validate_path);
            std::cout << "ok " << exp.config_hash << "\n";
            return 0;
        }
        if (*run) {
            diffsearch::Experiment exp = diffsearch::load_experiment(run_config);
            diffsearch::run_experiment(exp, force, diffsearch::resolve_workers(workers),
                                       std::cout);
            return 0;
        }
        if (*oracle) {
            diffsearch::Experiment exp = diffsearch::load_experiment(oracle_config);
            return diffsearch::oracle_experiment(exp, std::cout);
        }
        if (*plot) {
            return diffsearch::plot_results(plot_dir, metric, std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << app.help();
    return 1;
}
