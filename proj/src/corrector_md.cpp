#include "impx/corrector_md.hpp"

#include <cmath>

#include "impx/util.hpp"

namespace impx {

Mat matrix_sqrt_spd(const Mat& A) {
    const double scale = A.cwiseAbs().maxCoeff();
    if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, scale))
        throw invalid_parameter("matrix_sqrt_spd: matrix not symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> es(A);
    if (es.eigenvalues().minCoeff() <= 0.0)
        throw invalid_parameter("matrix_sqrt_spd: matrix not positive definite");
    Mat B = es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() *
            es.eigenvectors().transpose();
    return 0.5 * (B + B.transpose());
}

CorrectorMD::CorrectorMD(const MarketParams& market, const InvestorImpactParams& inv,
                         const MertonSolution& merton, std::shared_ptr<const Corrector1D> c1d)
    : R_(inv.R), kappa_(inv.kappa), m_(inv.m), m_star_(inv.m_star), c1d_(std::move(c1d)) {
    if (!c1d_ || c1d_->m != m_)
        throw invalid_parameter("corrector_md: 1-D corrector missing or solved for a different m");
    if (!validate_simplex(merton.pi()))
        throw invalid_parameter("corrector_md: pi outside the simplex");

    const int d = market.d;
    const Vec& pi = merton.pi();
    S_half_ = matrix_sqrt_spd(market.covariance());
    S_half_inv_ = S_half_.inverse();

    Sigma_.resize(d, d);
    for (int i = 0; i < d; ++i) {
        Vec v = pi;
        v[i] -= 1.0;
        Sigma_.col(i) = pi[i] * R_ * (S_half_ * v);
    }
    Mat SS = Sigma_ * S_half_;
    diagSS_ = (SS.transpose() * SS).diagonal();
    if (diagSS_.minCoeff() <= 0.0)
        throw invalid_parameter("corrector_md: (Sigma S)^T(Sigma S) has a nonpositive diagonal");

    gamma_.resize(d);
    beta_.resize(d);
    const double mk = std::pow(m_ / (kappa_ * (m_ - 1.0)), m_ - 1.0);
    for (int j = 0; j < d; ++j) {
        gamma_[j] = std::pow(2.0 * mk * std::pow(R_, 3.0 * m_ - 1.0) / std::pow(diagSS_[j], m_),
                             m_star_);
        beta_[j] = std::pow(2.0, -4.0 * m_star_) *
                   std::pow(diagSS_[j], 4.0 * m_ * m_star_ - 1.0) *
                   std::pow(R_, -1.0 - 4.0 * m_star_) *
                   std::pow(kappa_ * (m_ - 1.0) / m_, 4.0 * (m_ - 1.0) * m_star_);
    }
    lambda_ = 0.0;
    for (int j = 0; j < d; ++j) lambda_ += R_ / (2.0 * gamma_[j] * gamma_[j]);
    lambda_ *= c1d_->lambda_m;
}

double CorrectorMD::varpi_tilde(const Vec& x) const {
    double acc = 0.0;
    for (int j = 0; j < x.size(); ++j) acc += beta_[j] * c1d_->eval_w(gamma_[j] * x[j]);
    return acc;
}

Vec CorrectorMD::varpi_tilde_grad(const Vec& x) const {
    Vec g(x.size());
    for (int j = 0; j < x.size(); ++j)
        g[j] = beta_[j] * gamma_[j] * c1d_->eval_dw(gamma_[j] * x[j]);
    return g;
}

Vec CorrectorMD::varpi_tilde_hess_diag(const Vec& x) const {
    Vec h(x.size());
    for (int j = 0; j < x.size(); ++j)
        h[j] = beta_[j] * gamma_[j] * gamma_[j] * c1d_->eval_d2w(gamma_[j] * x[j]);
    return h;
}

double CorrectorMD::varpi_full(double g_t, double w, const Vec& s, const Vec& xi) const {
    if (w <= 0.0 || s.minCoeff() <= 0.0)
        throw invalid_parameter("varpi_full: wealth and prices must be positive");
    const Vec y = S_half_ * (xi.array() * s.array()).matrix() / std::pow(w, 1.0 + m_star_);
    return g_t * std::pow(w, 1.0 - R_ + 4.0 * m_star_) * varpi_tilde(y);
}

double CorrectorMD::first_corrector_residual(const std::vector<Vec>& x_samples) const {
    const double kinv = std::pow(kappa_, 1.0 - m_);
    double worst = 0.0;
    for (const Vec& x : x_samples) {
        const Vec grad = varpi_tilde_grad(x);
        const Vec hess = varpi_tilde_hess_diag(x);
        double lhs = 0.5 * R_ * x.squaredNorm();
        for (int j = 0; j < x.size(); ++j) {
            lhs -= kinv / m_ * apow(grad[j], m_);
            lhs += 0.5 / (R_ * R_) * diagSS_[j] * hess[j];
        }
        worst = std::max(worst, std::abs(lhs - lambda_));
    }
    return worst;
}

Mat ch0_matrix(const MarketParams& market, const InvestorImpactParams& inv, const Vec& pi,
               double w, const Vec& s) {
    if (w <= 0.0 || s.minCoeff() <= 0.0)
        throw invalid_parameter("ch0_matrix: wealth and prices must be positive");
    const int d = market.d;
    const Mat cov = market.covariance();
    const auto solver = cov.ldlt();
    Mat V(d, d);
    for (int i = 0; i < d; ++i) {
        Vec e = Vec::Zero(d);
        e[i] = 1.0;
        V.col(i) = (market.mu.array() - market.r).matrix() - inv.R * (cov * e);
    }
    Mat Q = V.transpose() * solver.solve(V);
    Mat out(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            out(i, j) = w * w * pi[i] * pi[j] / (inv.R * inv.R * s[i] * s[j]) * Q(i, j);
    return out;
}

double full_corrector_residual(const CorrectorMD& cmd, const MarketParams& market,
                               const InvestorImpactParams& inv, const MertonSolution& merton,
                               double t, double w, const Vec& s,
                               const std::vector<Vec>& xi_samples) {
    if (w <= 0.0 || s.minCoeff() <= 0.0)
        throw invalid_parameter("full_corrector_residual: wealth and prices must be positive");
    const double g_t = merton.g(t);
    const double R = inv.R, m = inv.m, ms = inv.m_star;
    const double V0w = g_t * std::pow(w, -R);
    const double V0ww = -R * g_t * std::pow(w, -R - 1.0);
    const Mat cov = market.covariance();
    const Mat ch0 = ch0_matrix(market, inv, merton.pi(), w, s);
    const double a = cmd.lambda() * g_t * std::pow(w, 3.0 * m * ms - R);
    const double kinv = std::pow(inv.kappa, 1.0 - m);

    double worst = 0.0;
    for (const Vec& xi : xi_samples) {
        const Vec xs = (xi.array() * s.array()).matrix();
        const Vec y = cmd.S_half() * xs / std::pow(w, 1.0 + ms);

        // varpi_xi and the Hessian by the chain rule through the factorized form
        const Vec grad_y = cmd.varpi_tilde_grad(y);
        const Vec hess_y = cmd.varpi_tilde_hess_diag(y);
        const double wpow = g_t * std::pow(w, -R + 3.0 * ms);
        const Vec varpi_xi = wpow * (s.array() * (cmd.S_half() * grad_y).array()).matrix();
        const Mat inner = cmd.S_half() * hess_y.asDiagonal() * cmd.S_half();
        const double wpow2 = g_t * std::pow(w, -1.0 - R + 2.0 * ms);
        Mat varpi_xixi = wpow2 * (s * s.transpose()).cwiseProduct(inner);

        double lhs = -0.5 * V0ww * xs.dot(cov * xs);
        const Vec z = cmd.S_half_inv() * (varpi_xi.array() / s.array()).matrix();
        double phi_sum = 0.0;
        for (int j = 0; j < z.size(); ++j) phi_sum += apow(z[j], m);
        lhs -= std::pow(V0w, 1.0 - m) / m * kinv * phi_sum;
        lhs += 0.5 * (ch0.cwiseProduct(varpi_xixi)).sum();

        worst = std::max(worst, std::abs(lhs - a) / std::abs(a));
    }
    return worst;
}

} // namespace impx
