#include <doctest.h>

#include <cmath>

#include "impx/corrector_md.hpp"
#include "impx/impact.hpp"
#include "impx/rng.hpp"

using namespace impx;

namespace {

ImpactModel benchmark_impact(double kappa = 1.0, double m = 3.0) {
    Mat sigma(2, 2);
    sigma << 0.30, 0.00, 0.09, 0.28;
    Mat S = matrix_sqrt_spd(sigma * sigma.transpose());
    return ImpactModel(S, S.inverse(), kappa, m);
}

Vec rand_vec(std::uint64_t seed, long i, std::uint32_t tag, double lo, double hi, int d) {
    Vec v(d);
    for (int j = 0; j < d; ++j) {
        double u0, u1;
        philox_uniform2(seed, std::uint64_t(i) * 8 + j, tag, 0, u0, u1);
        v[j] = lo + (hi - lo) * u0;
    }
    return v;
}

} // namespace

TEST_CASE("price shift basics") {
    ImpactModel imp = benchmark_impact();
    Vec s(2), zero(2);
    s << 1.0, 1.0;
    zero.setZero();
    CHECK(imp.impact_price_shift(s, zero).norm() == 0.0);

    for (int i = 0; i < 50; ++i) {
        Vec th = rand_vec(3, i, 1, -2.0, 2.0, 2);
        Vec f1 = imp.impact_price_shift(s, th);
        Vec f2 = imp.impact_price_shift(s, -th);
        CHECK((f1 + f2).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("scalar reduction for d=1") {
    Mat S1 = Mat::Identity(1, 1);
    ImpactModel imp(S1, S1, 2.0, 3.0);
    Vec s(1), th(1);
    s << 1.0;
    th << -1.7;
    Vec f = imp.impact_price_shift(s, th);
    const double expected = 2.0 * (2.0 / 3.0) * spow(-1.7, 0.5);
    CHECK(f[0] == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("execution cost") {
    ImpactModel imp = benchmark_impact();
    Vec s(2);
    s << 1.2, 0.8;
    Vec zero = Vec::Zero(2);
    CHECK(imp.execution_cost(s, zero) == 0.0);

    SUBCASE("matches theta . f(s,theta)") {
        for (int i = 0; i < 200; ++i) {
            Vec th = rand_vec(5, i, 2, -3.0, 3.0, 2);
            const double direct = th.dot(imp.impact_price_shift(s, th));
            CHECK(imp.execution_cost(s, th) == doctest::Approx(direct).epsilon(1e-12));
        }
    }
    SUBCASE("homogeneity of degree m/(m-1)") {
        Vec th = rand_vec(6, 0, 3, -1.0, 1.0, 2);
        const double base = imp.execution_cost(s, th);
        for (double c : {0.5, 2.0, 7.0})
            CHECK(imp.execution_cost(s, c * th) ==
                  doctest::Approx(std::pow(c, 1.5) * base).epsilon(1e-12));
    }
    SUBCASE("strictly positive off zero and midpoint convex") {
        for (int i = 0; i < 200; ++i) {
            Vec a = rand_vec(7, i, 4, -2.0, 2.0, 2);
            Vec b = rand_vec(8, i, 5, -2.0, 2.0, 2);
            if (a.norm() > 1e-12) CHECK(imp.execution_cost(s, a) > 0.0);
            const double mid = imp.execution_cost(s, 0.5 * (a + b));
            CHECK(mid <= 0.5 * (imp.execution_cost(s, a) + imp.execution_cost(s, b)) + 1e-12);
        }
    }
}

TEST_CASE("phi and its gradient") {
    ImpactModel imp = benchmark_impact();
    Vec s(2);
    s << 1.0, 1.5;

    SUBCASE("zero at zero, m-homogeneous") {
        Vec zero = Vec::Zero(2);
        CHECK(imp.phi(s, zero) == 0.0);
        CHECK(imp.phi_grad(s, zero).norm() == 0.0);
        Vec x = rand_vec(9, 3, 6, -1.0, 1.0, 2);
        const double base = imp.phi(s, x);
        for (double c : {0.25, 3.0})
            CHECK(imp.phi(s, c * x) == doctest::Approx(std::pow(c, 3.0) * base).epsilon(1e-12));
    }
    SUBCASE("gradient vs finite differences") {
        for (int i = 0; i < 100; ++i) {
            Vec x = rand_vec(10, i, 7, -2.0, 2.0, 2);
            Vec z = imp.S_half_inv() * (x.array() / s.array()).matrix();
            if (z.cwiseAbs().minCoeff() < 1e-2) continue;  // kink of |.|^{m-2}
            Vec g = imp.phi_grad(s, x);
            for (int j = 0; j < 2; ++j) {
                const double h = 1e-6 * std::max(1.0, std::abs(x[j]));
                Vec xp = x, xm = x;
                xp[j] += h;
                xm[j] -= h;
                const double fd = (imp.phi(s, xp) - imp.phi(s, xm)) / (2 * h);
                CHECK(g[j] == doctest::Approx(fd).epsilon(1e-6));
            }
        }
    }
    SUBCASE("gradient odd in x") {
        for (int i = 0; i < 50; ++i) {
            Vec x = rand_vec(11, i, 8, -2.0, 2.0, 2);
            CHECK((imp.phi_grad(s, x) + imp.phi_grad(s, -x)).cwiseAbs().maxCoeff() < 1e-13);
        }
    }
}

TEST_CASE("Fenchel-Young inequality and equality at the dual optimizer") {
    ImpactModel imp = benchmark_impact();
    double worst_gap = 0.0;
    for (int i = 0; i < 10000; ++i) {
        Vec s = rand_vec(12, i, 9, 0.5, 2.0, 2);
        Vec x = rand_vec(13, i, 10, -2.0, 2.0, 2);
        Vec th = rand_vec(14, i, 11, -2.0, 2.0, 2);
        const double lhs = x.dot(th);
        const double rhs = imp.phi(s, x) + imp.execution_cost(s, th);
        CHECK(lhs <= rhs + 1e-10 * (1.0 + std::abs(rhs)));

        Vec th_star = imp.phi_grad(s, x);
        const double gap =
            std::abs(x.dot(th_star) - imp.phi(s, x) - imp.execution_cost(s, th_star));
        worst_gap = std::max(worst_gap, gap / (1.0 + std::abs(x.dot(th_star))));
    }
    CHECK(worst_gap <= 1e-8);
}

TEST_CASE("brute-force conjugate matches phi") {
    ImpactModel imp = benchmark_impact();

    // coordinate-wise numeric maximization in y = S(theta x s): the cost separates
    auto conjugate_by_coordinate_search = [&](const Vec& s, const Vec& x) {
        Vec z = imp.S_half_inv() * (x.array() / s.array()).matrix();
        double total = 0.0;
        for (int j = 0; j < 2; ++j) {
            // maximize z_j y - kappa (m-1)/m |y|^{m/(m-1)} by golden section on [0, Ymax]
            const double zj = std::abs(z[j]);
            double lo = 0.0, hi = std::pow(zj / imp.kappa(), imp.m() - 1.0) * 2.0 + 1.0;
            auto fval = [&](double y) {
                return zj * y - imp.kappa() * (imp.m() - 1.0) / imp.m() *
                                     std::pow(y, imp.m() / (imp.m() - 1.0));
            };
            const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
            double a = lo, b = hi;
            double c1 = b - gr * (b - a), c2 = a + gr * (b - a);
            for (int it = 0; it < 200; ++it) {
                if (fval(c1) < fval(c2)) {
                    a = c1;
                    c1 = c2;
                    c2 = a + gr * (b - a);
                } else {
                    b = c2;
                    c2 = c1;
                    c1 = b - gr * (b - a);
                }
            }
            total += fval(0.5 * (a + b));
        }
        return total;
    };

    for (int i = 0; i < 40; ++i) {
        Vec s = rand_vec(15, i, 12, 0.5, 2.0, 2);
        Vec x = rand_vec(16, i, 13, -2.0, 2.0, 2);
        if (x.cwiseAbs().minCoeff() < 0.1) continue;
        const double phi = imp.phi(s, x);
        CHECK(conjugate_by_coordinate_search(s, x) == doctest::Approx(phi).epsilon(1e-6));

        // crude grid search over theta directly
        Vec th_star = imp.phi_grad(s, x);
        double best = 0.0;
        const int N = 41;
        for (int a = 0; a < N; ++a)
            for (int b = 0; b < N; ++b) {
                Vec th(2);
                th << th_star[0] * (0.5 + 1.0 * (a + 0.29) / (N - 1)),
                    th_star[1] * (0.5 + 1.0 * (b + 0.29) / (N - 1));
                best = std::max(best, x.dot(th) - imp.execution_cost(s, th));
            }
        CHECK(best == doctest::Approx(phi).epsilon(1e-4));
    }
}
