#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "impx/market_sim.hpp"
#include "impx/rng.hpp"
#include "impx/util.hpp"

using namespace impx;

namespace {

struct Fixture {
    MarketParams market;
    InvestorImpactParams inv;
    MertonSolution merton;
    std::shared_ptr<const CorrectorMD> cmd;
    MarketSim sim;

    Fixture()
        : market(make_mu(), make_sigma(), 0.02),
          inv(0.5, 1.0, 1.0, 3.0),
          merton(market, inv),
          cmd(std::make_shared<CorrectorMD>(market, inv, merton,
                                            std::make_shared<Corrector1D>(shoot_lambda(3.0)))),
          sim(market, inv, merton, cmd) {}

    static Vec make_mu() {
        Vec mu(2);
        mu << 0.04, 0.05;
        return mu;
    }
    static Mat make_sigma() {
        Mat s(2, 2);
        s << 0.30, 0.00, 0.09, 0.28;
        return s;
    }

    SimConfig base_cfg() const {
        SimConfig c;
        c.epsilon = 0.05;
        c.n_paths = 64;
        c.seed = 4242;
        c.s0 = Vec::Ones(2);
        c.monitor_mode = MonitorMode::record;
        return c;
    }
};

Fixture& fx() {
    static Fixture f;
    return f;
}

} // namespace

TEST_CASE("price step") {
    auto& f = fx();
    Vec S(2), dB(2);
    S << 1.0, 2.0;

    SUBCASE("no noise gives the deterministic exponential") {
        dB.setZero();
        Vec S1 = step_prices(S, 0.5, dB, f.market);
        for (int j = 0; j < 2; ++j) {
            const double vol2 = f.market.sigma.row(j).squaredNorm();
            CHECK(S1[j] == doctest::Approx(S[j] * std::exp((f.market.mu[j] - 0.5 * vol2) * 0.5)));
        }
    }
    SUBCASE("Monte-Carlo moment matches exp(mu dt)") {
        const double dt = 0.1;
        const long n = 200000;
        double sum = 0.0, sumsq = 0.0;
        for (long i = 0; i < n; ++i) {
            double z0, z1;
            philox_normal2(5150, i, 0, 0, z0, z1);
            dB << std::sqrt(dt) * z0, std::sqrt(dt) * z1;
            const double ratio = step_prices(S, dt, dB, f.market)[0] / S[0];
            sum += ratio;
            sumsq += ratio * ratio;
        }
        const double mean = sum / n;
        const double se = std::sqrt((sumsq / n - mean * mean) / n);
        CHECK(std::abs(mean - std::exp(f.market.mu[0] * dt)) <= 3.0 * se);
    }
    SUBCASE("martingale when mu = 0") {
        Vec mu0 = Vec::Zero(2);
        MarketParams mk0(mu0, f.market.sigma, 0.0);
        const double dt = 0.05;
        const long n = 200000;
        double sum = 0.0, sumsq = 0.0;
        for (long i = 0; i < n; ++i) {
            double z0, z1;
            philox_normal2(5151, i, 0, 0, z0, z1);
            dB << std::sqrt(dt) * z0, std::sqrt(dt) * z1;
            const double ratio = step_prices(S, dt, dB, mk0)[1] / S[1];
            sum += ratio;
            sumsq += ratio * ratio;
        }
        const double mean = sum / n;
        const double se = std::sqrt((sumsq / n - mean * mean) / n);
        CHECK(std::abs(mean - 1.0) <= 3.0 * se);
    }
}

TEST_CASE("rescaled displacement") {
    auto& f = fx();
    const double ms = f.inv.m_star;
    Vec S(2);
    S << 1.3, 0.7;
    const double W = 1.9, eps = 0.05;

    SUBCASE("zero at the Merton target") {
        Vec H = f.merton.h0_shares(W, S);
        CHECK(rescaled_displacement(W, S, H, eps, f.merton.pi(), f.cmd->S_half(), ms).norm() <
              1e-13);
    }
    SUBCASE("linear in the weight displacement") {
        Vec H0 = f.merton.h0_shares(W, S);
        Vec dH(2);
        dH << 0.02, -0.03;
        Vec x1 = rescaled_displacement(W, S, H0 + dH, eps, f.merton.pi(), f.cmd->S_half(), ms);
        Vec x2 = rescaled_displacement(W, S, H0 + 2.0 * dH, eps, f.merton.pi(), f.cmd->S_half(),
                                       ms);
        CHECK((x2 - 2.0 * x1).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("hand-composed d=2 value") {
        Vec H(2);
        H << 0.5, 0.9;
        Vec rho = (H.array() * S.array() / W).matrix();
        Vec expect = f.cmd->S_half() *
                     ((rho - f.merton.pi()) * std::pow(eps * W, -ms));
        Vec got = rescaled_displacement(W, S, H, eps, f.merton.pi(), f.cmd->S_half(), ms);
        CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("candidate trading rate") {
    auto& f = fx();
    Vec S(2);
    S << 1.0, 1.0;
    const double W = 1.0, eps = 0.05;

    SUBCASE("zero at the target") {
        Vec H = f.merton.h0_shares(W, S);
        CHECK(candidate_rate(W, S, H, eps, f.merton.pi(), *f.cmd).norm() == 0.0);
    }
    SUBCASE("over-invested means selling (d=1 sign chain)") {
        Vec mu(1);
        mu << 0.038;
        Mat sg(1, 1);
        sg << 0.3;
        MarketParams mk(mu, sg, 0.02);
        InvestorImpactParams inv(0.5, 1.0, 1.0, 3.0);
        MertonSolution ms(mk, inv);
        auto cmd1 = std::make_shared<CorrectorMD>(mk, inv, ms,
                                                  std::make_shared<Corrector1D>(shoot_lambda(3.0)));
        Vec s1(1), h1(1);
        s1 << 1.0;
        h1 << ms.pi()[0] * 1.2;  // 20% over target
        Vec th = candidate_rate(1.0, s1, h1, eps, ms.pi(), *cmd1);
        CHECK(th[0] < 0.0);
        h1 << ms.pi()[0] * 0.8;
        CHECK(candidate_rate(1.0, s1, h1, eps, ms.pi(), *cmd1)[0] > 0.0);
    }
    SUBCASE("agrees with eps^{-1} Phi_x(S, -eps^{3m*} varpi_xi / V0_w)") {
        const ImpactModel& imp = fx().sim.impact();
        const double t = 0.3;
        for (int i = 0; i < 60; ++i) {
            double u0, u1, u2, u3;
            philox_uniform2(8888, i, 0, 0, u0, u1);
            philox_uniform2(8888, i, 1, 0, u2, u3);
            const double w = 0.7 + u0;
            Vec s(2), H(2);
            s << 0.8 + 0.4 * u1, 0.8 + 0.4 * u2;
            H = f.merton.h0_shares(w, s);
            H[0] *= 1.0 + 0.15 * (u3 - 0.5);
            H[1] *= 1.0 + 0.1 * (u0 - 0.5);

            Vec direct = candidate_rate(w, s, H, eps, f.merton.pi(), *f.cmd);

            // route through the dual friction gradient and the full varpi
            const double ms_ = f.inv.m_star;
            const double g_t = f.merton.g(t);
            Vec xi = (H - f.merton.h0_shares(w, s)) / std::pow(eps, ms_);
            const double V0w = g_t * std::pow(w, -0.5);
            Vec y = f.cmd->S_half() * (xi.array() * s.array()).matrix() /
                    std::pow(w, 1.0 + ms_);
            Vec varpi_xi = g_t * std::pow(w, -0.5 + 3.0 * ms_) *
                           (s.array() * (f.cmd->S_half() * f.cmd->varpi_tilde_grad(y)).array())
                               .matrix();
            Vec via_phi =
                imp.phi_grad(s, (-std::pow(eps, 3.0 * ms_) / V0w) * varpi_xi) / eps;

            for (int j = 0; j < 2; ++j)
                CHECK(via_phi[j] ==
                      doctest::Approx(direct[j]).epsilon(1e-10).scale(std::abs(direct[j]) + 1e-12));
        }
    }
}

TEST_CASE("wealth step") {
    auto& f = fx();
    SUBCASE("pure money market") {
        Vec H = Vec::Zero(2), S = Vec::Ones(2), sdB = Vec::Zero(2);
        const double W1 = euler_wealth_step(1.0, H, S, 0.0, 0.0, 0.01, sdB, f.market);
        CHECK(W1 == doctest::Approx(1.0 + 0.02 * 0.01).epsilon(1e-14));
    }
    SUBCASE("impact cost homogeneity in eps") {
        const ImpactModel& imp = f.sim.impact();
        Vec S(2), th(2);
        S << 1.1, 0.9;
        th << 0.7, -0.4;
        const double alpha = f.inv.alpha;
        const double base = impact_cost_rate(imp, S, th, 1.0);
        for (double eps : {0.5, 0.1, 0.01, 1e-4})
            CHECK(impact_cost_rate(imp, S, th, eps) ==
                  doctest::Approx(std::pow(eps, alpha) * base).epsilon(1e-11));
        CHECK(impact_cost_rate(imp, S, th, 1e-12) < 1e-5);  // vanishes in the frictionless limit
    }
}

TEST_CASE("liquidation mechanics") {
    auto& f = fx();
    SUBCASE("window impact cost vanishes relative to eps^{2m*}") {
        const ImpactModel& imp = f.sim.impact();
        Vec S = Vec::Ones(2);
        Vec H = f.merton.h0_shares(1.0, S);
        double prev_ratio = 1e300;
        for (double eps : {0.2, 0.1, 0.05, 0.025, 0.01}) {
            const double window = std::pow(eps, 2.0 * f.inv.m_star);
            Vec theta = -H / window;
            const double total_cost = impact_cost_rate(imp, S, theta, eps) * window;
            const double ratio = total_cost / window;
            CHECK(ratio < prev_ratio);
            prev_ratio = ratio;
        }
    }
    SUBCASE("breach-triggered liquidation ends in cash") {
        SimConfig cfg = fx().base_cfg();
        cfg.monitor_mode = MonitorMode::liquidate;
        cfg.n_paths = 8;
        cfg.epsilon = 0.05;
        cfg.start_at_h0 = false;
        cfg.H_init = 2.0 * f.merton.h0_shares(cfg.w0, cfg.s0);  // far outside the band
        const SimResult res = f.sim.run_paths(cfg);
        CHECK(res.frac_stopped_early == 1.0);
        for (const auto& p : res.paths) {
            CHECK(p.reason == StopReason::weight_breach);
            CHECK(p.terminal_wealth > 0.0);
        }
    }
    SUBCASE("no breach leads to the horizon liquidation window") {
        SimConfig cfg = fx().base_cfg();
        cfg.monitor_mode = MonitorMode::liquidate;
        cfg.guard_mult = 50.0;      // wide bands: only the forced window fires
        cfg.cash_floor_mult = -10.0;
        cfg.n_paths = 8;
        const SimResult res = f.sim.run_paths(cfg);
        CHECK(res.frac_stopped_early == 0.0);
        for (const auto& p : res.paths) CHECK(p.reason == StopReason::horizon);
    }
}

TEST_CASE("monitor flags") {
    auto& f = fx();
    SimConfig cfg = f.base_cfg();
    cfg.n_paths = 16;
    SUBCASE("at-target start far from the band never breaches over one step") {
        cfg.n_steps_override = 1;
        cfg.guard_mult = 1e6;
        cfg.cash_floor_mult = -1e6;
        const SimResult res = f.sim.run_paths(cfg);
        CHECK(res.frac_band_breach == 0.0);
    }
    SUBCASE("displaced start breaches immediately") {
        cfg.n_steps_override = 1;
        cfg.start_at_h0 = false;
        cfg.H_init = 1.5 * f.merton.h0_shares(cfg.w0, cfg.s0);
        const SimResult res = f.sim.run_paths(cfg);
        CHECK(res.frac_band_breach == 1.0);
    }
}

TEST_CASE("frictionless run matches the Merton value") {
    auto& f = fx();
    SimConfig cfg = f.base_cfg();
    cfg.epsilon = 0.0;
    cfg.n_paths = 20000;
    cfg.n_steps_base = 200;
    const SimResult res = f.sim.run_paths(cfg);
    const double v0 = f.merton.frictionless_value(0.0, 1.0);
    CHECK(std::abs(res.mean_utility - v0) <= 3.0 * res.std_err);
}

TEST_CASE("determinism") {
    auto& f = fx();
    SimConfig cfg = f.base_cfg();
    cfg.n_paths = 200;
    SUBCASE("same seed, same bytes") {
        const SimResult a = f.sim.run_paths(cfg);
        const SimResult b = f.sim.run_paths(cfg);
        REQUIRE(a.paths.size() == b.paths.size());
        CHECK(a.mean_utility == b.mean_utility);
        for (size_t i = 0; i < a.paths.size(); ++i) {
            CHECK(a.paths[i].utility == b.paths[i].utility);
            CHECK(a.paths[i].terminal_wealth == b.paths[i].terminal_wealth);
        }
    }
    SUBCASE("thread count does not change results") {
        SimConfig one = cfg, four = cfg;
        one.n_threads = 1;
        four.n_threads = 4;
        const SimResult a = f.sim.run_paths(one);
        const SimResult b = f.sim.run_paths(four);
        CHECK(a.mean_utility == b.mean_utility);
        CHECK(a.std_err == b.std_err);
    }
    SUBCASE("different seeds differ") {
        SimConfig other = cfg;
        other.seed += 1;
        CHECK(f.sim.run_paths(cfg).mean_utility != f.sim.run_paths(other).mean_utility);
    }
}

TEST_CASE("utility accumulator equals the trapezoid of traced consumption") {
    auto& f = fx();
    SimConfig cfg = f.base_cfg();
    cfg.n_paths = 1;
    cfg.n_steps_override = 257;
    const SimResult res = f.sim.run_paths(cfg);

    const std::string path = "trace_test.csv";
    f.sim.trace_path(cfg, 0, path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);  // header
    std::vector<double> cs;
    while (std::getline(in, line)) {
        const size_t last = line.rfind(',');
        cs.push_back(std::stod(line.substr(last + 1)));
    }
    std::remove(path.c_str());
    REQUIRE(int(cs.size()) == 257);

    const double dt = res.dt;
    auto U = [&](double c) { return f.merton.utility(c); };
    double util = 0.0;
    for (size_t k = 1; k < cs.size(); ++k) util += 0.5 * (U(cs[k - 1]) + U(cs[k])) * dt;
    const double WT = res.paths[0].terminal_wealth;
    util += 0.5 * (U(cs.back()) + U(f.merton.g_inv_pow(1.0) * WT)) * dt;
    util += U(WT);
    CHECK(util == doctest::Approx(res.paths[0].utility).epsilon(1e-10));
}

TEST_CASE("mean reversion and wealth coupling trends") {
    auto& f = fx();
    SimConfig cfg = f.base_cfg();
    cfg.n_paths = 400;
    std::vector<double> eps{0.2, 0.1, 0.05};
    double prev_gap = 1e300;
    std::vector<double> medX;
    for (double e : eps) {
        cfg.epsilon = e;
        const PairedResult pr = f.sim.run_paths_paired(cfg);
        CHECK(pr.sim.med_max_wealth_gap < prev_gap);
        prev_gap = pr.sim.med_max_wealth_gap;
        medX.push_back(pr.sim.med_max_absX);
    }
    // median max |X| nonincreasing in eps up to 10% slack
    for (size_t i = 1; i < medX.size(); ++i) CHECK(medX[i] <= medX[i - 1] * 1.10);
}

TEST_CASE("liquidation of an empty book is a no-op cash drift") {
    auto& f = fx();
    SimConfig cfg = f.base_cfg();
    cfg.monitor_mode = MonitorMode::liquidate;
    cfg.n_paths = 4;
    cfg.start_at_h0 = false;
    cfg.H_init = Vec::Zero(2);  // weights breach the band instantly, nothing to sell
    const SimResult res = f.sim.run_paths(cfg);
    // terminal wealth is the deterministic consume-and-roll cash account
    double logW = std::log(cfg.w0);
    const int n = res.n_steps;
    for (int k = 0; k < n; ++k) {
        const double t = k * res.dt;
        logW += (f.market.r - f.merton.g_inv_pow(t)) * res.dt -
                0.0;  // Euler drift only, no noise exposure
    }
    for (const auto& p : res.paths) {
        CHECK(p.reason == StopReason::weight_breach);
        CHECK(p.terminal_wealth == doctest::Approx(std::exp(logW)).epsilon(2e-3));
        CHECK(p.terminal_wealth == doctest::Approx(res.paths[0].terminal_wealth));
    }
}

TEST_CASE("impact cost along the candidate equals the gradient-power form") {
    // theta . f(S, eps theta) at the candidate rate must reduce to
    // (m-1)/(m kappa^{m-1}) (eps W)^{2m*} W sum_j |w~_{x_j}(X)|^m
    auto& f = fx();
    const ImpactModel& imp = f.sim.impact();
    const double ms = f.inv.m_star;
    for (int i = 0; i < 60; ++i) {
        double u0, u1, u2, u3;
        philox_uniform2(31337, i, 0, 0, u0, u1);
        philox_uniform2(31337, i, 1, 0, u2, u3);
        const double W = 0.6 + u0, eps = 0.01 + 0.3 * u1;
        Vec S(2);
        S << 0.7 + 0.6 * u2, 0.7 + 0.6 * u3;
        Vec H = f.merton.h0_shares(W, S);
        H[0] *= 1.0 + 0.2 * (u1 - 0.5);
        H[1] *= 1.0 + 0.2 * (u2 - 0.5);

        const Vec theta = candidate_rate(W, S, H, eps, f.merton.pi(), *f.cmd);
        const double direct = impact_cost_rate(imp, S, theta, eps);

        const Vec X = rescaled_displacement(W, S, H, eps, f.merton.pi(), f.cmd->S_half(), ms);
        const Vec wx = f.cmd->varpi_tilde_grad(X);
        double acc = 0.0;
        for (int j = 0; j < 2; ++j) acc += apow(wx[j], 3.0);
        const double via_gradient = (3.0 - 1.0) / (3.0 * 1.0) *
                                    std::pow(eps * W, 2.0 * ms) * W * acc;
        CHECK(direct == doctest::Approx(via_gradient).epsilon(1e-11));
    }
}

TEST_CASE("three-asset market end to end") {
    Vec mu(3);
    mu << 0.030, 0.026, 0.034;
    Mat sigma(3, 3);
    sigma << 0.30, 0.00, 0.00, 0.06, 0.26, 0.00, 0.03, 0.04, 0.32;
    MarketParams market(mu, sigma, 0.015);
    InvestorImpactParams inv(0.5, 1.0, 1.0, 3.0);
    MertonSolution merton(market, inv);
    auto cmd = std::make_shared<CorrectorMD>(market, inv, merton,
                                             std::make_shared<Corrector1D>(shoot_lambda(3.0)));
    MarketSim sim(market, inv, merton, cmd);

    CHECK(merton.pi().sum() == doctest::Approx(0.7695562900641026).epsilon(1e-10));
    CHECK(cmd->gamma()[1] == doctest::Approx(51.49173091).epsilon(1e-7));
    CHECK(cmd->lambda() == doctest::Approx(0.0012321351341).epsilon(1e-8));

    // separated corrector residual holds in d=3
    std::vector<Vec> xs;
    const double xbox = cmd->c1d().X_max / cmd->gamma().maxCoeff();
    for (int i = 0; i < 200; ++i) {
        Vec x(3);
        for (int j = 0; j < 3; ++j) {
            double u0, u1;
            philox_uniform2(71, i * 4 + j, 50, 0, u0, u1);
            x[j] = (2.0 * u0 - 1.0) * xbox;
        }
        xs.push_back(x);
    }
    CHECK(cmd->first_corrector_residual(xs) <= 1e-5);

    SimConfig cfg;
    cfg.epsilon = 0.05;
    cfg.n_paths = 300;
    cfg.n_steps_base = 400;
    cfg.seed = 777;
    cfg.s0 = Vec::Ones(3);
    cfg.monitor_mode = MonitorMode::record;
    const PairedResult pr = sim.run_paths_paired(cfg);
    CHECK(std::isfinite(pr.loss_mean));
    CHECK(pr.loss_mean > 0.0);
    CHECK(pr.sim.mean_utility > 0.0);
    for (const auto& p : pr.sim.paths) CHECK(std::isfinite(p.utility));

    cfg.epsilon = 0.0;
    cfg.n_paths = 20000;
    const SimResult fr = sim.run_paths(cfg);
    CHECK(std::abs(fr.mean_utility - merton.frictionless_value(0.0, 1.0)) <=
          3.0 * fr.std_err);
}
