#ifndef IMPX_CORRECTOR1D_HPP
#define IMPX_CORRECTOR1D_HPP

#include <string>
#include <vector>

namespace impx {

// Options for the 1-D ergodic corrector solve.
struct ShootOptions {
    double bisect_tol = 1e-10;     // bracket width for lambda_m
    double asym_tol = 0.005;       // derivative-ratio tolerance at X_max
    double value_ratio_tol = 0.018;  // value-growth tolerance at X_max
    double rk_rel_tol = 1e-10;
    double rk_abs_tol = 1e-12;
    double X_start = 10.0;         // initial X_max, doubled until asymptote reached
    double X_cap = 160.0;
    double lambda_search_max = 1e3;
    double grid_h = 1.0 / 512.0;
    double X_max_override = 0.0;   // > 0 pins X_max and skips the asymptote guard (tests)
};

// Solution of  (w1)''(x) = -x^2 + lambda_m + c_m |(w1)'(x)|^m,  w1(0) = (w1)'(0) = 0,
// tabulated on a uniform grid over [0, X_max] with asymptotic power-law continuation
// beyond X_max. Even in x; the derivative is odd.
class Corrector1D {
  public:
    double m = 0.0;
    double lambda_m = 0.0;
    double X_max = 0.0;
    double grid_h = 0.0;
    double c_m = 0.0;           // m^{-m} (m-1)^{m-1}
    double asym_coeff_dw = 0.0; // m (m-1)^{1/m-1}
    double asym_coeff_w = 0.0;  // m^2 / ((m+2)(m-1)^{1-1/m})
    double c_match = 0.0;       // value-continuity constant of the continuation

    std::vector<double> x_grid, w_vals, dw_vals, d2w_vals, slopes;

    double eval_w(double x) const;
    double eval_dw(double x) const;
    double eval_d2w(double x) const;

    // RHS of the first-order form: q' = -x^2 + lambda_m + c_m |q|^m.
    double ode_rhs(double x, double q) const;

    // Max |FD(q)' + x^2 - lambda_m - c_m|q|^m| over interior grid nodes with
    // |x| >= kink_guard, second derivative by 5-point central differences.
    double max_ode_residual(double kink_guard = 0.05) const;

    void save(const std::string& csv_path, const std::string& json_path) const;
    static Corrector1D load(const std::string& csv_path, const std::string& json_path);
};

Corrector1D shoot_lambda(double m, const ShootOptions& opt = {});
Corrector1D shoot_lambda(double m, double X_max, double bisect_tol);

// Forward-shooting bisection on the blow-up classification alone (no tabulation).
// Exposed separately so tests can probe bracket perturbations and monotonicity.
double lambda_by_forward_bisection(double m, double bisect_tol, double lambda_hi_start = 1.0,
                                   double lambda_search_max = 1e3);

// Blow-up classification of the forward shot at this lambda (true = "high").
bool forward_classify_high(double m, double lambda);

struct SecondDerivReport {
    double max_abs = 0.0;        // global max |w''| on the grid
    double tail_max = 0.0;       // max |w''| over the last 10% of the grid
    double tail_rel_envelope = 0.0;  // max relative deviation from (2/m) A x^{2/m-1} on the tail
    double dw_ratio_err = 0.0;   // |dw(X_max)/X_max^{2/m} / A - 1|
    bool pass = false;
};

// Bounded second derivative with vanishing tail: passes when the tail is either
// below 10% of the global max, or has entered the asymptotic regime (derivative
// ratio at X_max) and tracks the x^{2/m-1} decay envelope there.
SecondDerivReport verify_second_derivative_bound(const Corrector1D& c);

} // namespace impx

#endif
