#ifndef IMPX_SECOND_CORRECTOR_HPP
#define IMPX_SECOND_CORRECTOR_HPP

#include <cstdint>
#include <vector>

#include "impx/market.hpp"

namespace impx {

struct FeynmanKacResult {
    double mc_estimate = 0.0;
    double std_err = 0.0;
    double analytic = 0.0;
    double z_score = 0.0;
};

// Utility-loss profile u(t,w) = lambda w^{3 m m* - R} barg(t) where barg solves
//   barg'(t) + barg(t) [ -b g(t)^{-1/R} + b r + (b/R + b(b-1)/(2R^2)) q ] = -g(t),
//   barg(T) = 0,  b = 3 m m* - R,  q = (mu-r1)^T (ss^T)^{-1} (mu-r1).
class SecondCorrector {
  public:
    SecondCorrector(const MarketParams& market, const InvestorImpactParams& inv,
                    const MertonSolution& merton, double lambda, int ode_grid_n = 4096);

    double beta_exp() const { return beta_exp_; }
    double lambda() const { return lambda_; }

    // Nested-quadrature evaluation of the explicit double-integral expression.
    double bar_g_closed_form(double t) const;
    // Backward ODE tabulation, Hermite-interpolated between nodes.
    double bar_g(double t) const;
    const std::vector<double>& bar_g_grid_times() const { return t_grid_; }
    const std::vector<double>& bar_g_grid_values() const { return barg_; }

    double u_value(double t, double w) const;   // lambda w^beta barg(t)
    double a_source(double t, double w) const;  // lambda g(t) w^beta

    // Monte-Carlo check of u(t,w) = E[int_t^T a(r, W0_r) dr] on exact
    // frictionless optimal-wealth paths.
    FeynmanKacResult feynman_kac_check(double t, double w, long n_paths, std::uint64_t seed,
                                       int n_steps = 512) const;

    void export_csv(const std::string& path) const;  // columns t, bar_g

  private:
    double ode_coefficient(double t) const;  // -b g^{-1/R} + b r + coef * q
    double G_cached(double t) const;         // Simpson antiderivative of g^{-1/R} from 0

    MarketParams market_;
    MertonSolution merton_;
    double lambda_ = 0.0;
    double beta_exp_ = 0.0;
    double const_rate_ = 0.0;  // b r + (b/R + b(b-1)/(2R^2)) q
    double T_ = 0.0;
    double R_ = 0.0;

    std::vector<double> G_;  // antiderivative cache on a fine uniform grid
    double G_h_ = 0.0;

    std::vector<double> t_grid_, barg_, barg_slope_;
};

} // namespace impx

#endif
