#include "impx/second_corrector.hpp"

#include <array>
#include <boost/numeric/odeint.hpp>
#include <cmath>
#include <fstream>

#include "impx/rng.hpp"
#include "impx/util.hpp"

namespace impx {

namespace {
namespace ode = boost::numeric::odeint;
using State = std::array<double, 1>;
using Stepper = ode::runge_kutta_dopri5<State>;
constexpr int kAntiderivPanels = 10000;
} // namespace

SecondCorrector::SecondCorrector(const MarketParams& market, const InvestorImpactParams& inv,
                                 const MertonSolution& merton, double lambda, int ode_grid_n)
    : market_(market), merton_(merton), lambda_(lambda), T_(inv.T), R_(inv.R) {
    beta_exp_ = 3.0 * inv.m * inv.m_star - R_;
    // exponent identity 3 m m* = 1 + 2 m*
    if (std::abs(3.0 * inv.m * inv.m_star - (1.0 + 2.0 * inv.m_star)) > 1e-14)
        throw solver_error("second_corrector: exponent identity 3mm* = 1 + 2m* violated");
    const double b = beta_exp_;
    const_rate_ =
        b * market.r + (b / R_ + b * (b - 1.0) / (2.0 * R_ * R_)) * market.excess_quadratic();

    // composite-Simpson antiderivative of g^{-1/R} on a fine uniform grid
    G_h_ = T_ / kAntiderivPanels;
    G_.resize(kAntiderivPanels + 1);
    G_[0] = 0.0;
    for (int i = 0; i < kAntiderivPanels; ++i) {
        const double a = i * G_h_, bb = (i + 1) * G_h_;
        G_[i + 1] = G_[i] + G_h_ / 6.0 *
                                (merton_.g_inv_pow(a) + 4.0 * merton_.g_inv_pow(0.5 * (a + bb)) +
                                 merton_.g_inv_pow(bb));
    }

    // backward ODE tabulation, landing exactly on every grid node
    const int n = ode_grid_n;
    t_grid_.resize(n + 1);
    barg_.assign(n + 1, 0.0);
    barg_slope_.assign(n + 1, 0.0);
    for (int i = 0; i <= n; ++i) t_grid_[i] = T_ * double(i) / double(n);
    auto rhs = [this](const State& y, State& dydt, double t) {
        dydt[0] = -merton_.g(t) - y[0] * ode_coefficient(t);
    };
    State y{0.0};
    auto stepper = ode::make_controlled<Stepper>(1e-12, 1e-10);
    for (int i = n; i > 0; --i) {
        ode::integrate_adaptive(stepper, rhs, y, t_grid_[i], t_grid_[i - 1],
                                -(t_grid_[i] - t_grid_[i - 1]));
        barg_[i - 1] = y[0];
    }
    barg_[n] = 0.0;
    for (int i = 0; i <= n; ++i)
        barg_slope_[i] = -merton_.g(t_grid_[i]) - barg_[i] * ode_coefficient(t_grid_[i]);
}

double SecondCorrector::ode_coefficient(double t) const {
    return -beta_exp_ * merton_.g_inv_pow(t) + const_rate_;
}

double SecondCorrector::G_cached(double t) const {
    const int i = std::min(int(t / G_h_), kAntiderivPanels - 1);
    const double a = i * G_h_;
    // one Simpson step from the nearest cached node
    return G_[i] + (t - a) / 6.0 *
                       (merton_.g_inv_pow(a) + 4.0 * merton_.g_inv_pow(0.5 * (a + t)) +
                        merton_.g_inv_pow(t));
}

double SecondCorrector::bar_g_closed_form(double t) const {
    if (t < 0.0 || t > T_) throw invalid_parameter("bar_g: t outside [0, T]");
    if (t == T_) return 0.0;
    const double Gt = G_cached(t);
    auto integrand = [&](double s_) {
        const double expo = -beta_exp_ * (G_cached(s_) - Gt) + const_rate_ * (s_ - t);
        return merton_.g(s_) * std::exp(expo);
    };
    // adaptive composite Simpson, refined until two successive levels agree
    double prev = 0.0;
    for (int panels = 64; panels <= (1 << 20); panels *= 2) {
        const double h = (T_ - t) / panels;
        double acc = 0.0;
        for (int i = 0; i < panels; ++i) {
            const double a = t + i * h;
            acc += h / 6.0 * (integrand(a) + 4.0 * integrand(a + 0.5 * h) + integrand(a + h));
        }
        if (panels > 64 && std::abs(acc - prev) <= 1e-11 * (1.0 + std::abs(acc))) return acc;
        prev = acc;
    }
    throw solver_error("bar_g_closed_form: quadrature refinement budget exceeded");
}

double SecondCorrector::bar_g(double t) const {
    if (t < 0.0 || t > T_) throw invalid_parameter("bar_g: t outside [0, T]");
    const int n = int(t_grid_.size()) - 1;
    const double h = T_ / n;
    const int i = std::min(int(t / h), n - 1);
    const double u = (t - t_grid_[i]) / h;
    const double u2 = u * u, u3 = u2 * u;
    return (2 * u3 - 3 * u2 + 1) * barg_[i] + h * (u3 - 2 * u2 + u) * barg_slope_[i] +
           (-2 * u3 + 3 * u2) * barg_[i + 1] + h * (u3 - u2) * barg_slope_[i + 1];
}

double SecondCorrector::u_value(double t, double w) const {
    if (w <= 0.0) throw invalid_parameter("u_value: wealth must be positive");
    return lambda_ * std::pow(w, beta_exp_) * bar_g(t);
}

double SecondCorrector::a_source(double t, double w) const {
    if (w <= 0.0) throw invalid_parameter("a_source: wealth must be positive");
    return lambda_ * merton_.g(t) * std::pow(w, beta_exp_);
}

FeynmanKacResult SecondCorrector::feynman_kac_check(double t, double w, long n_paths,
                                                    std::uint64_t seed, int n_steps) const {
    if (w <= 0.0) throw invalid_parameter("feynman_kac_check: wealth must be positive");
    FeynmanKacResult out;
    out.analytic = u_value(t, w);
    if (t >= T_) return out;

    const Vec& pi = merton_.pi();
    const Mat cov = market_.covariance();
    const double sig_p2 = pi.dot(cov * pi);
    const double sig_p = std::sqrt(sig_p2);
    const double drift = market_.r + pi.dot((market_.mu.array() - market_.r).matrix()) -
                         0.5 * sig_p2;
    const double dt = (T_ - t) / n_steps;
    const double sqdt = std::sqrt(dt);

    // deterministic per-step pieces, shared by all paths
    std::vector<double> cons(n_steps), a_coef(n_steps + 1);
    for (int k = 0; k < n_steps; ++k)
        cons[k] = merton_.integral_g_inv_pow(t + k * dt, t + (k + 1) * dt);
    for (int k = 0; k <= n_steps; ++k) a_coef[k] = lambda_ * merton_.g(t + k * dt);

    double sum = 0.0, sumsq = 0.0;
    for (long p = 0; p < n_paths; ++p) {
        double logW = std::log(w);
        double acc = 0.0;
        double prev = a_coef[0] * std::exp(beta_exp_ * logW);
        for (int k = 0; k < n_steps; ++k) {
            double z0, z1;
            philox_normal2(seed, std::uint64_t(p), std::uint32_t(k), 0u, z0, z1);
            logW += drift * dt - cons[k] + sig_p * sqdt * z0;
            const double cur = a_coef[k + 1] * std::exp(beta_exp_ * logW);
            acc += 0.5 * (prev + cur) * dt;
            prev = cur;
        }
        sum += acc;
        sumsq += acc * acc;
    }
    const double mean = sum / double(n_paths);
    const double var = (sumsq - double(n_paths) * mean * mean) / double(n_paths - 1);
    out.mc_estimate = mean;
    out.std_err = std::sqrt(var / double(n_paths));
    out.z_score = (mean - out.analytic) / out.std_err;
    return out;
}

void SecondCorrector::export_csv(const std::string& path) const {
    std::ofstream csv(path);
    if (!csv) throw solver_error("second_corrector: cannot write " + path);
    csv.precision(17);
    csv << "t,bar_g\n";
    for (size_t i = 0; i < t_grid_.size(); ++i) csv << t_grid_[i] << ',' << barg_[i] << '\n';
}

} // namespace impx
