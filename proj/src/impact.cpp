#include "impx/impact.hpp"

#include <cmath>

#include "impx/util.hpp"

namespace impx {

ImpactModel::ImpactModel(Mat S_half, Mat S_half_inv, double kappa, double m)
    : S_half_(std::move(S_half)), S_half_inv_(std::move(S_half_inv)), kappa_(kappa), m_(m) {
    if (!(kappa_ > 0.0)) throw invalid_parameter("impact: kappa must be > 0");
    if (!(m_ > 2.0)) throw invalid_parameter("impact: m must be > 2");
}

void ImpactModel::check_prices(const Vec& s) const {
    if (s.size() != S_half_.rows() || s.minCoeff() <= 0.0)
        throw invalid_parameter("impact: prices must be positive, length d");
}

Vec ImpactModel::impact_price_shift(const Vec& s, const Vec& theta) const {
    check_prices(s);
    const double a = 1.0 / (m_ - 1.0);
    Vec y = S_half_ * (theta.array() * s.array()).matrix();
    Vec yp(y.size());
    for (int j = 0; j < y.size(); ++j) yp[j] = spow(y[j], a);
    Vec z = S_half_ * yp;
    return kappa_ * (m_ - 1.0) / m_ * (s.array() * z.array()).matrix();
}

double ImpactModel::execution_cost(const Vec& s, const Vec& theta) const {
    check_prices(s);
    const double p = m_ / (m_ - 1.0);
    Vec y = S_half_ * (theta.array() * s.array()).matrix();
    double acc = 0.0;
    for (int j = 0; j < y.size(); ++j) acc += apow(y[j], p);
    return kappa_ * (m_ - 1.0) / m_ * acc;
}

double ImpactModel::phi(const Vec& s, const Vec& x) const {
    check_prices(s);
    Vec z = S_half_inv_ * (x.array() / s.array()).matrix();
    double acc = 0.0;
    for (int j = 0; j < z.size(); ++j) acc += apow(z[j], m_);
    return acc / (m_ * std::pow(kappa_, m_ - 1.0));
}

Vec ImpactModel::phi_grad(const Vec& s, const Vec& x) const {
    check_prices(s);
    Vec z = S_half_inv_ * (x.array() / s.array()).matrix();
    Vec zp(z.size());
    for (int i = 0; i < z.size(); ++i) zp[i] = spow(z[i], m_ - 1.0);
    // d z_i / d x_j = (S^{-1})_{ij} / s_j
    Vec grad = S_half_inv_.transpose() * zp;
    grad.array() /= s.array();
    return grad / std::pow(kappa_, m_ - 1.0);
}

} // namespace impx
