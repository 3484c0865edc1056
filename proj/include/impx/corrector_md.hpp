#ifndef IMPX_CORRECTOR_MD_HPP
#define IMPX_CORRECTOR_MD_HPP

#include <memory>
#include <vector>

#include "impx/corrector1d.hpp"
#include "impx/market.hpp"

namespace impx {

// Symmetric PD square root via spectral decomposition.
Mat matrix_sqrt_spd(const Mat& A);

// Multidimensional corrector built from the 1-D solution by separation:
//   w~(x) = sum_j beta_j w1(gamma_j x_j),
// solving  R/2 |x|^2 - (1/m) sum_j kappa^{1-m} |w~_{x_j}|^m
//            + 1/(2R^2) Tr(w~_{xx} (Sigma S)^T Sigma S) = lambda .
class CorrectorMD {
  public:
    CorrectorMD(const MarketParams& market, const InvestorImpactParams& inv,
                const MertonSolution& merton, std::shared_ptr<const Corrector1D> c1d);

    int d() const { return int(gamma_.size()); }
    const Mat& S_half() const { return S_half_; }
    const Mat& S_half_inv() const { return S_half_inv_; }
    const Mat& Sigma() const { return Sigma_; }
    const Vec& diagSS() const { return diagSS_; }
    const Vec& gamma() const { return gamma_; }
    const Vec& beta() const { return beta_; }
    double lambda() const { return lambda_; }
    const Corrector1D& c1d() const { return *c1d_; }
    double R() const { return R_; }
    double kappa() const { return kappa_; }
    double m() const { return m_; }
    double m_star() const { return m_star_; }

    double varpi_tilde(const Vec& x) const;
    Vec varpi_tilde_grad(const Vec& x) const;
    Vec varpi_tilde_hess_diag(const Vec& x) const;

    // varpi(t,w,s,xi) = g(t) w^{1-R+4m*} w~( S (xi x s) / w^{1+m*} )
    double varpi_full(double g_t, double w, const Vec& s, const Vec& xi) const;

    // |LHS - lambda| of the separated corrector equation at each sample; returns the max.
    double first_corrector_residual(const std::vector<Vec>& x_samples) const;

  private:
    Mat S_half_, S_half_inv_, Sigma_;
    Vec diagSS_, gamma_, beta_;
    double lambda_ = 0.0;
    double R_, kappa_, m_, m_star_;
    std::shared_ptr<const Corrector1D> c1d_;
};

// Quadratic variation matrix of the frictionless share process,
//   c^{h0}_{ij} = w^2 pi_i pi_j / (R^2 s_i s_j) (mu - r1 - R ss^T e_i)^T (ss^T)^{-1} (mu - r1 - R ss^T e_j).
Mat ch0_matrix(const MarketParams& market, const InvestorImpactParams& inv, const Vec& pi,
               double w, const Vec& s);

// Relative residual of the unfactorized first corrector equation in the original
// (t,w,s,xi) variables against a(t,w,s) = lambda g(t) w^{3 m m* - R}.
double full_corrector_residual(const CorrectorMD& cmd, const MarketParams& market,
                               const InvestorImpactParams& inv, const MertonSolution& merton,
                               double t, double w, const Vec& s,
                               const std::vector<Vec>& xi_samples);

} // namespace impx

#endif
