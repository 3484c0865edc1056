// Independent lambda_m oracle: backward-manifold shooting integrated with an
// A-stable implicit trapezoidal rule (Newton per step, Richardson-extrapolated,
// adaptive by step doubling). No code shared with the production solver path.
#include "lambda_oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace impx_tests {

namespace {

double apow(double x, double a) { return x == 0.0 ? 0.0 : std::pow(std::abs(x), a); }

struct Ode {
    double lam, c_m, m;
    double f(double x, double q) const { return -x * x + lam + c_m * apow(q, m); }
    double df_dq(double q) const {
        return c_m * m * apow(q, m - 1.0) * (q < 0.0 ? -1.0 : 1.0);
    }
};

// one implicit trapezoid step from (x, q) to x + h
double itrap_step(const Ode& o, double x, double q, double h) {
    const double f0 = o.f(x, q);
    double z = q + h * f0;  // explicit predictor
    for (int it = 0; it < 12; ++it) {
        const double phi = z - q - 0.5 * h * (f0 + o.f(x + h, z));
        const double dphi = 1.0 - 0.5 * h * o.df_dq(z);
        const double dz = phi / dphi;
        z -= dz;
        if (std::abs(dz) < 1e-15 * (1.0 + std::abs(z))) break;
    }
    return z;
}

// adaptive extrapolated trapezoid from x0 down to x1 (< x0)
double integrate_down(const Ode& o, double x0, double x1, double q0, double tol) {
    double x = x0, q = q0, h = -1e-3;
    while (x > x1) {
        if (x + h < x1) h = x1 - x;
        const double full = itrap_step(o, x, q, h);
        const double half1 = itrap_step(o, x, q, 0.5 * h);
        const double half2 = itrap_step(o, x + 0.5 * h, half1, 0.5 * h);
        const double err = std::abs(half2 - full) / 3.0;
        const double scale = tol * (1.0 + std::abs(q));
        if (err <= scale) {
            q = (4.0 * half2 - full) / 3.0;  // extrapolated value, O(h^4) locally
            x += h;
            if (err < 0.1 * scale) h *= 1.7;
        } else {
            h *= 0.5;
            if (std::abs(h) < 1e-13)
                throw std::runtime_error("lambda oracle: step size underflow");
        }
    }
    return q;
}

double manifold_seed(double X, double lam, double c_m, double m) {
    double q = std::pow((X * X - lam) / c_m, 1.0 / m);
    for (int i = 0; i < 3; ++i) {
        const double dq =
            (1.0 / m) * std::pow((X * X - lam) / c_m, 1.0 / m - 1.0) * (2.0 * X / c_m);
        q = std::pow((X * X - lam + dq) / c_m, 1.0 / m);
    }
    return q;
}

} // namespace

double lambda_stiff_oracle(double m, double X, double lam_center) {
    const double c_m = std::pow(m, -m) * std::pow(m - 1.0, m - 1.0);
    auto q0_for = [&](double lam) {
        Ode o{lam, c_m, m};
        return integrate_down(o, X, 0.0, manifold_seed(X, lam, c_m, m), 1e-13);
    };

    double lo = lam_center - 1e-6, hi = lam_center + 1e-6;
    double flo = q0_for(lo);
    const double fhi = q0_for(hi);
    if (flo * fhi >= 0.0)
        throw std::runtime_error("lambda oracle: no bracket around the solver estimate");
    while (hi - lo > 1e-13) {
        const double mid = 0.5 * (lo + hi);
        if (q0_for(mid) * flo < 0.0)
            hi = mid;
        else
            lo = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace impx_tests
