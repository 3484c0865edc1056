#ifndef IMPX_CONFIG_HPP
#define IMPX_CONFIG_HPP

#include <iosfwd>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "impx/market_sim.hpp"
#include "impx/second_corrector.hpp"

namespace impx {

// Run configuration mirroring the module parameter blocks. Two on-disk formats:
// a sectioned key-value text file and JSON.
struct RunConfig {
    // market
    std::vector<double> mu;
    std::vector<std::vector<double>> sigma;
    double r = 0.02;
    // investor / impact
    double R = 0.5;
    double T = 1.0;
    double kappa = 1.0;
    double m = 3.0;
    // sim
    double epsilon = 0.1;
    long n_paths = 10000;
    int n_steps_base = 1000;
    double dt_factor = 0.1;
    std::uint64_t seed = 20240801;
    double t0 = 0.0;
    double w0 = 1.0;
    std::vector<double> s0;
    std::string monitor_mode = "liquidate";
    double guard_mult = 1.0;
    double cash_floor_mult = 0.75;
    int n_threads = 0;
    int trace_paths = 0;
    // validator
    std::vector<double> eps_grid{0.2, 0.1, 0.05, 0.025};
    long validator_paths = 10000;
    double ratio_tol = 0.2;
    double slack_tol = 0.1;
    std::vector<double> scaling_eps_grid{1e-4, 1e-5, 1e-6};
    long scaling_paths = 100000;
    long fk_paths = 100000;
    // solver
    double bisect_tol = 1e-10;
    double asym_tol = 0.005;
    // output
    std::string output_dir = "out";
    std::string cache_dir = "cache";

    SimConfig sim_config() const;
};

RunConfig load_config(const std::string& path);      // sniffs JSON vs key-value
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::ordered_json config_to_json(const RunConfig& c);
void save_config(const RunConfig& c, const std::string& path);  // key-value format
std::string config_hash(const RunConfig& c);

// The benchmark configuration pinned in-repo.
RunConfig benchmark_config();

// Constructed model objects for one configuration.
struct Pipeline {
    MarketParams market;
    InvestorImpactParams investor;
    MertonSolution merton;
    std::shared_ptr<const Corrector1D> c1d;
    std::shared_ptr<const CorrectorMD> corrector;
    std::shared_ptr<SecondCorrector> second;
    std::shared_ptr<MarketSim> sim;
};

// Validates the config (recomputing pi, nu and the simplex condition), solves or
// loads the cached 1-D corrector, and assembles everything downstream.
Pipeline build_pipeline(const RunConfig& cfg, bool use_cache = true,
                        std::ostream* log = nullptr);

} // namespace impx

#endif
