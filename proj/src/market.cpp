#include "impx/market.hpp"

#include <cmath>

namespace impx {

MarketParams::MarketParams(Vec mu_, Mat sigma_, double r_)
    : mu(std::move(mu_)), sigma(std::move(sigma_)), r(r_), d(int(mu.size())) {
    if (d < 1) throw invalid_parameter("market: d must be >= 1");
    if (sigma.rows() != d || sigma.cols() != d)
        throw invalid_parameter("market: sigma must be d x d");
    Eigen::SelfAdjointEigenSolver<Mat> es(covariance());
    if (es.eigenvalues().minCoeff() <= 0.0)
        throw invalid_parameter("market: sigma sigma^T must be positive definite");
}

double MarketParams::excess_quadratic() const {
    Vec ex = mu.array() - r;
    return ex.dot(covariance().ldlt().solve(ex));
}

InvestorImpactParams::InvestorImpactParams(double R_, double T_, double kappa_, double m_)
    : R(R_), T(T_), kappa(kappa_), m(m_) {
    if (!(R > 0.0 && R < 1.0)) throw invalid_parameter("investor: R must be in (0,1)");
    if (!(T > 0.0)) throw invalid_parameter("investor: T must be > 0");
    if (!(kappa > 0.0)) throw invalid_parameter("investor: kappa must be > 0");
    if (!(m > 2.0)) throw invalid_parameter("investor: m must be > 2");
    m_star = 1.0 / (3.0 * m - 2.0);
    alpha = 1.0 / (m - 1.0);
}

Vec merton_fraction(const MarketParams& market, const InvestorImpactParams& inv) {
    Mat cov = market.covariance();
    Eigen::SelfAdjointEigenSolver<Mat> es(cov);
    const double lmin = es.eigenvalues().minCoeff();
    const double lmax = es.eigenvalues().maxCoeff();
    if (lmin <= 0.0 || lmax / lmin > 1e10)
        throw invalid_parameter("merton_fraction: covariance singular or condition number > 1e10");
    Vec ex = market.mu.array() - market.r;
    return cov.ldlt().solve(ex) / inv.R;
}

bool validate_simplex(const Vec& pi) {
    if (pi.size() == 0) return false;
    return pi.minCoeff() > 0.0 && pi.sum() < 1.0;
}

double nu_constant(const MarketParams& market, const InvestorImpactParams& inv) {
    const double R = inv.R;
    const double nu =
        (R - 1.0) * (market.r / R + market.excess_quadratic() / (2.0 * R * R));
    if (std::abs(nu) <= 1e-12)
        throw invalid_parameter("nu_constant: nu degenerate (|nu| <= 1e-12), g(t) formula invalid");
    return nu;
}

double g_function(double t, double nu, double R, double T) {
    const double slack = 1e-9 * std::max(1.0, T);
    if (t < -slack || t > T + slack) throw invalid_parameter("g: t outside [0, T]");
    t = std::min(std::max(t, 0.0), T);
    const double inner = (1.0 + (nu - 1.0) * std::exp(-nu * (T - t))) / nu;
    if (inner <= 0.0) throw invalid_parameter("g: inner expression nonpositive");
    return std::pow(inner, R);
}

MertonSolution::MertonSolution(const MarketParams& market, const InvestorImpactParams& inv)
    : pi_(merton_fraction(market, inv)),
      nu_(nu_constant(market, inv)),
      T_(inv.T),
      R_(inv.R) {
    if (!validate_simplex(pi_))
        throw invalid_parameter("merton: pi violates the no-short/no-borrow simplex condition");
    pi_star_ = std::min(pi_.minCoeff(), 1.0 - pi_.sum());
}

double MertonSolution::g(double t) const { return g_function(t, nu_, R_, T_); }

double MertonSolution::g_inv_pow(double t) const {
    // g^{-1/R} = nu / (1 + (nu-1) e^{-nu(T-t)})
    return nu_ / (1.0 + (nu_ - 1.0) * std::exp(-nu_ * (T_ - t)));
}

double MertonSolution::integral_g_inv_pow(double t, double s) const {
    // antiderivative in closed form: nu (s-t) - (1/R) log(g(s)/g(t))
    return nu_ * (s - t) - (1.0 / R_) * std::log(g(s) / g(t));
}

double MertonSolution::frictionless_value(double t, double w) const {
    if (w <= 0.0) throw invalid_parameter("frictionless_value: wealth must be positive");
    return g(t) * utility(w);
}

double MertonSolution::optimal_consumption_rate(double t, double w) const {
    if (w <= 0.0) throw invalid_parameter("optimal_consumption_rate: wealth must be positive");
    return g_inv_pow(t) * w;
}

Vec MertonSolution::h0_shares(double w, const Vec& s) const {
    if (w <= 0.0) throw invalid_parameter("h0_shares: wealth must be positive");
    if (s.minCoeff() <= 0.0) throw invalid_parameter("h0_shares: prices must be positive");
    return (pi_.array() * w / s.array()).matrix();
}

double MertonSolution::utility(double c) const {
    return std::pow(c, 1.0 - R_) / (1.0 - R_);
}

std::vector<double> MertonSolution::tabulate_g(int n) const {
    std::vector<double> out(n + 1);
    for (int i = 0; i <= n; ++i) out[i] = g(T_ * double(i) / double(n));
    return out;
}

} // namespace impx
