#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ncmech/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"ncmech - doubled-variable nonconservative mechanics engine"};
    app.require_subcommand(1);

    std::string configPath, outDir = ".", gridPath, suite = "all";
    std::uint64_t seed = 20260810;
    double tol = 1e-9;
    int jobs = 1;

    auto* run = app.add_subcommand("run", "integrate a scenario and write its artifacts");
    run->add_option("config", configPath, "scenario JSON file")->required();
    run->add_option("--out", outDir, "output directory (default: current)");

    auto* verify = app.add_subcommand("verify", "run the verification suites");
    verify->add_option("suite", suite, "all | brackets | ledger | oracles | parser");
    verify->add_option("--seed", seed, "random seed for sampled checks");
    verify->add_option("--tol", tol, "bracket-algebra tolerance (default 1e-9)");

    auto* sweep = app.add_subcommand("sweep", "run a scenario over a parameter grid");
    sweep->add_option("config", configPath, "scenario JSON template")->required();
    sweep->add_option("--grid", gridPath, "grid JSON: {\"param\": [values...]}")->required();
    sweep->add_option("--out", outDir, "output directory (default: current)");
    sweep->add_option("--jobs", jobs, "concurrent runs (default 1)");

    auto* list = app.add_subcommand("list-models", "print the model catalog");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            auto cfg = ncmech::cli::load_config(configPath);
            return ncmech::cli::cmd_run(cfg, outDir, std::cerr);
        }
        if (verify->parsed()) return ncmech::cli::cmd_verify(suite, seed, tol, std::cout);
        if (sweep->parsed()) {
            auto cfg = ncmech::cli::load_config(configPath);
            return ncmech::cli::cmd_sweep(cfg, gridPath, outDir, jobs, std::cerr);
        }
        if (list->parsed()) return ncmech::cli::cmd_list_models(std::cout);
    } catch (const ncmech::ConfigError& err) {
        std::cerr << "config error: " << err.what() << "\n";
        return 2;
    } catch (const ncmech::Error& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 3;
    }
    return 0;
}
