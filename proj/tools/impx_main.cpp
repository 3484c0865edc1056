#include <CLI11.hpp>
#include <iostream>

#include "impx/cli.hpp"
#include "impx/util.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Small price-impact expansion of the Merton consumption problem"};
    app.require_subcommand(1);
    app.fallthrough();  // allow global flags after the subcommand

    std::string config_path;
    long paths_override = -1;
    long long seed_override = -1;
    std::vector<double> eps_override;
    std::string out_override;
    int trace = 0;

    app.add_option("--config", config_path, "configuration file (key-value or JSON)");
    app.add_option("--seed", seed_override, "override sim.seed");
    app.add_option("--paths", paths_override, "override path counts");
    app.add_option("--eps", eps_override, "override the eps grid / sim epsilon");
    app.add_option("--out", out_override, "override output directory");
    app.add_flag("--trace", trace, "emit per-path trace CSVs (first path)");

    auto* solve = app.add_subcommand("solve-corrector", "solve and cache the corrector system");
    auto* verify = app.add_subcommand("verify", "run residual, duality and Feynman-Kac checks");
    auto* simulate = app.add_subcommand("simulate", "simulate the candidate strategy");
    auto* converge = app.add_subcommand("converge", "run the expansion convergence study");

    CLI11_PARSE(app, argc, argv);

    impx::RunConfig cfg;
    try {
        cfg = config_path.empty() ? impx::benchmark_config() : impx::load_config(config_path);
        if (seed_override >= 0) cfg.seed = std::uint64_t(seed_override);
        if (paths_override > 0) {
            cfg.n_paths = paths_override;
            cfg.validator_paths = paths_override;
        }
        if (!eps_override.empty()) {
            cfg.eps_grid = eps_override;
            cfg.epsilon = eps_override.front();
        }
        if (!out_override.empty()) cfg.output_dir = out_override;
        if (trace > 0) cfg.trace_paths = std::max(cfg.trace_paths, 1);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (solve->parsed()) return impx::cmd_solve_corrector(cfg, std::cout);
        if (verify->parsed()) return impx::cmd_verify(cfg, std::cout);
        if (simulate->parsed()) return impx::cmd_simulate(cfg, std::cout);
        if (converge->parsed()) return impx::cmd_converge(cfg, std::cout);
    } catch (const impx::invalid_parameter& e) {
        std::cerr << "invalid config: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
