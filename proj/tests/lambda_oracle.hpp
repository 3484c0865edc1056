#ifndef IMPX_TESTS_LAMBDA_ORACLE_HPP
#define IMPX_TESTS_LAMBDA_ORACLE_HPP

namespace impx_tests {

// Independent lambda_m estimate: backward-manifold shooting integrated with an
// implicit stiff stepper, bisected on q(0) = 0.
double lambda_stiff_oracle(double m, double X, double lam_center);

} // namespace impx_tests

#endif
