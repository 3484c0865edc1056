#ifndef IMPX_MARKET_HPP
#define IMPX_MARKET_HPP

#include <Eigen/Dense>
#include <vector>

#include "impx/util.hpp"

namespace impx {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Constant-coefficient Black-Scholes market primitives.
struct MarketParams {
    Vec mu;      // annualized drifts, length d
    Mat sigma;   // d x d volatility matrix, row j drives asset j
    double r = 0.0;
    int d = 0;

    MarketParams() = default;
    MarketParams(Vec mu_, Mat sigma_, double r_);

    Mat covariance() const { return sigma * sigma.transpose(); }
    // (mu - r 1)^T (sigma sigma^T)^{-1} (mu - r 1), reused all over the place
    double excess_quadratic() const;
};

// Investor preferences and the price-impact exponents derived from m.
struct InvestorImpactParams {
    double R = 0.5;       // relative risk aversion, in (0,1)
    double T = 1.0;       // horizon
    double kappa = 1.0;   // impact scale
    double m = 3.0;       // impact exponent, > 2
    double m_star = 0.0;  // 1/(3m-2)
    double alpha = 0.0;   // 1/(m-1)

    InvestorImpactParams() = default;
    InvestorImpactParams(double R_, double T_, double kappa_, double m_);
};

class MertonSolution {
  public:
    MertonSolution(const MarketParams& market, const InvestorImpactParams& inv);

    const Vec& pi() const { return pi_; }
    double nu() const { return nu_; }
    double T() const { return T_; }
    double R() const { return R_; }
    double pi_star() const { return pi_star_; }

    // g(t) = ((1 + (nu-1) e^{-nu (T-t)}) / nu)^R, g(T) = 1
    double g(double t) const;
    // d/dt would follow from the ODE; what downstream needs is g^{-1/R}
    double g_inv_pow(double t) const;  // g(t)^{-1/R}
    // Exact integral of g(u)^{-1/R} over [t, s].
    double integral_g_inv_pow(double t, double s) const;

    double frictionless_value(double t, double w) const;        // g(t) U(w)
    double optimal_consumption_rate(double t, double w) const;  // g(t)^{-1/R} w
    Vec h0_shares(double w, const Vec& s) const;                // pi_i w / s_i

    double utility(double c) const;  // U(c) = c^{1-R}/(1-R)

    // Tabulates g on an (n+1)-point uniform grid over [0, T].
    std::vector<double> tabulate_g(int n) const;

  private:
    Vec pi_;
    double nu_ = 0.0;
    double T_ = 0.0;
    double R_ = 0.0;
    double pi_star_ = 0.0;
};

// pi = (1/R) (sigma sigma^T)^{-1} (mu - r 1). Throws on ill-conditioned covariance.
Vec merton_fraction(const MarketParams& market, const InvestorImpactParams& inv);

// true iff pi_i > 0 for all i and sum pi_i < 1
bool validate_simplex(const Vec& pi);

// nu = (R-1) (r/R + (mu-r1)^T (sigma sigma^T)^{-1} (mu-r1) / (2R^2)); throws if |nu| <= 1e-12
double nu_constant(const MarketParams& market, const InvestorImpactParams& inv);

double g_function(double t, double nu, double R, double T);

} // namespace impx

#endif
