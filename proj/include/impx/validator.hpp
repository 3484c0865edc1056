#ifndef IMPX_VALIDATOR_HPP
#define IMPX_VALIDATOR_HPP

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "impx/market_sim.hpp"
#include "impx/second_corrector.hpp"

namespace impx {

struct EpsResult {
    double eps = 0.0;
    double mean_utility = 0.0;
    double std_err = 0.0;  // of the paired loss estimate
    double loss = 0.0;
    double loss_ratio = 0.0;
    double se_ratio = 0.0;
    double frac_stopped = 0.0;
    double frac_violation = 0.0;
    double med_max_absX = 0.0;
    double med_max_wealth_gap = 0.0;
};

struct ConvergenceReport {
    std::string config_hash;
    std::vector<double> eps_grid;
    double v0 = 0.0;
    double u0 = 0.0;
    std::vector<EpsResult> per_eps;
    bool pass = false;
    double fitted_remainder_slope = 0.0;  // least-squares slope of log loss vs log eps
    bool insufficient_paths = false;
    double ratio_tol = 0.2;
    double slack_tol = 0.1;
};

// Leading-order correction of the value expansion,
//   lambda (1-R) w^{2m*} barg(t) U(w);  asserts equality with u_value(t, w).
double theoretical_correction(double t, double w, const SecondCorrector& sc, double R,
                              double m_star);

// Renormalized utility-loss study on a decreasing eps grid with common random
// numbers (shared grid and noise across eps) and a paired loss estimator.
ConvergenceReport convergence_study(const std::vector<double>& eps_grid, const SimConfig& base,
                                    const MarketSim& sim, const SecondCorrector& sc,
                                    double ratio_tol = 0.2, double slack_tol = 0.1);

// Supplementary small-eps study: checks the scaling predictions that are visible
// at desk scale (loss > 0 decreasing, ratio decreasing toward 1 from above, and
// the log-log slope within (2m*, 3m* + 0.05]).
struct ScalingReport {
    std::vector<EpsResult> per_eps;
    double slope = 0.0;
    bool pass = false;
    std::string config_hash;
};
ScalingReport scaling_study(const std::vector<double>& eps_grid, const SimConfig& base,
                            const MarketSim& sim, const SecondCorrector& sc);

nlohmann::ordered_json expansion_report(const ConvergenceReport& rep);
ConvergenceReport parse_expansion_report(const nlohmann::json& j);
void write_expansion_csv(const ConvergenceReport& rep, const std::string& path);
nlohmann::ordered_json scaling_report_json(const ScalingReport& rep);

} // namespace impx

#endif
