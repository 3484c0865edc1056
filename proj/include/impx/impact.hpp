#ifndef IMPX_IMPACT_HPP
#define IMPX_IMPACT_HPP

#include <Eigen/Dense>

#include "impx/market.hpp"

namespace impx {

// Nonlinear price-impact primitives for
//   f_j(s, theta) = kappa (m-1)/m  s_j ( S ( S(theta x s) )^{(1/(m-1))} )_j,
// with S = (sigma sigma^T)^{1/2}, and the dual
//   Phi(s, x) = 1/(m kappa^{m-1}) sum_j |(S^{-1}(x/s))_j|^m .
class ImpactModel {
  public:
    ImpactModel(Mat S_half, Mat S_half_inv, double kappa, double m);

    int d() const { return int(S_half_.rows()); }
    double kappa() const { return kappa_; }
    double m() const { return m_; }
    const Mat& S_half() const { return S_half_; }
    const Mat& S_half_inv() const { return S_half_inv_; }

    // Execution price shift f(s, theta), componentwise.
    Vec impact_price_shift(const Vec& s, const Vec& theta) const;

    // Instantaneous cost theta . f(s, theta) = kappa (m-1)/m sum |(S(theta x s))_j|^{m/(m-1)}.
    double execution_cost(const Vec& s, const Vec& theta) const;

    double phi(const Vec& s, const Vec& x) const;
    Vec phi_grad(const Vec& s, const Vec& x) const;

  private:
    void check_prices(const Vec& s) const;

    Mat S_half_;
    Mat S_half_inv_;
    double kappa_;
    double m_;
};

} // namespace impx

#endif
