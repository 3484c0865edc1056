#include "impx/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>

#include "impx/rng.hpp"
#include "impx/util.hpp"
#include "impx/validator.hpp"

namespace impx {

namespace {

namespace fs = std::filesystem;

struct CheckList {
    std::ostream& log;
    bool all_ok = true;
    void check(const std::string& name, bool ok, const std::string& detail = "") {
        log << (ok ? "PASS " : "FAIL ") << name;
        if (!detail.empty()) log << "  [" << detail << "]";
        log << "\n";
        all_ok = all_ok && ok;
    }
};

double uniform_in(std::uint64_t seed, std::uint64_t idx, std::uint32_t tag, double lo,
                  double hi) {
    double u0, u1;
    philox_uniform2(seed ^ 0x5eedf00dULL, idx, tag, 0, u0, u1);
    return lo + (hi - lo) * u0;
}

std::string fmt(double x) {
    std::ostringstream ss;
    ss << std::setprecision(6) << x;
    return ss.str();
}

} // namespace

int cmd_solve_corrector(const RunConfig& cfg, std::ostream& log) {
    Pipeline p = build_pipeline(cfg, true, &log);
    const Corrector1D& c = p.corrector->c1d();
    log << "lambda_m = " << std::setprecision(15) << c.lambda_m << "  (m = " << c.m
        << ", X_max = " << c.X_max << ")\n";
    log << "gamma = " << p.corrector->gamma().transpose() << "\n";
    log << "beta  = " << p.corrector->beta().transpose() << "\n";
    log << "lambda = " << p.corrector->lambda() << "\n";

    fs::create_directories(cfg.output_dir);
    nlohmann::ordered_json j;
    j["config_hash"] = config_hash(cfg);
    j["m"] = c.m;
    j["lambda_m"] = c.lambda_m;
    j["X_max"] = c.X_max;
    std::vector<double> gv(p.corrector->gamma().data(),
                           p.corrector->gamma().data() + p.corrector->gamma().size());
    std::vector<double> bv(p.corrector->beta().data(),
                           p.corrector->beta().data() + p.corrector->beta().size());
    j["gamma"] = gv;
    j["beta"] = bv;
    j["lambda"] = p.corrector->lambda();
    j["pi"] = std::vector<double>(p.merton.pi().data(),
                                  p.merton.pi().data() + p.merton.pi().size());
    j["nu"] = p.merton.nu();
    std::ofstream out(cfg.output_dir + "/constants.json");
    out << j.dump(2) << "\n";
    p.second->export_csv(cfg.output_dir + "/bar_g.csv");
    return 0;
}

int cmd_verify(const RunConfig& cfg, std::ostream& log) {
    Pipeline p = build_pipeline(cfg, true, &log);
    CheckList cl{log};
    const int d = p.market.d;
    const auto& cmd = *p.corrector;
    const auto& c1d = cmd.c1d();

    // matrix square root reconstruction
    const Mat cov = p.market.covariance();
    const double rec_err = (cmd.S_half() * cmd.S_half() - cov).norm() / cov.norm();
    cl.check("matrix_sqrt_reconstruction", rec_err <= 1e-10, "rel " + fmt(rec_err));

    // Merton first-order condition (sigma sigma^T)(R pi) = mu - r 1
    const double foc = (cov * (p.investor.R * p.merton.pi()) -
                        (p.market.mu.array() - p.market.r).matrix())
                           .cwiseAbs()
                           .maxCoeff();
    cl.check("merton_first_order_condition", foc <= 1e-12, fmt(foc));

    // 1-D corrector: residual, boundary, asymptotic ratio
    const double res1d = c1d.max_ode_residual();
    cl.check("corrector1d_ode_residual", res1d <= 1e-8, fmt(res1d));
    const double ratio_err =
        std::abs(c1d.dw_vals.back() / std::pow(c1d.X_max, 2.0 / c1d.m) / c1d.asym_coeff_dw - 1.0);
    cl.check("corrector1d_derivative_ratio", ratio_err < cfg.asym_tol, fmt(ratio_err));
    const auto sd = verify_second_derivative_bound(c1d);
    cl.check("corrector1d_second_derivative_tail", sd.pass,
             "max " + fmt(sd.max_abs) + " tail " + fmt(sd.tail_max));

    // multidimensional residual over the box mapped into the 1-D grid
    const double xbox = c1d.X_max / cmd.gamma().maxCoeff();
    std::vector<Vec> xs;
    for (int i = 0; i < 1000; ++i) {
        Vec x(d);
        for (int j = 0; j < d; ++j)
            x[j] = uniform_in(cfg.seed, std::uint64_t(i) * 16 + j, 101, -xbox, xbox);
        xs.push_back(x);
    }
    const double mdres = cmd.first_corrector_residual(xs);
    cl.check("first_corrector_residual", mdres <= 1e-5, fmt(mdres));

    // full (unfactorized) equation at random states
    double worst_full = 0.0;
    for (int rep = 0; rep < 4; ++rep) {
        const double t = uniform_in(cfg.seed, rep, 201, 0.0, 0.9 * p.investor.T);
        const double w = uniform_in(cfg.seed, rep, 202, 0.5, 2.0);
        Vec s(d);
        for (int j = 0; j < d; ++j) s[j] = uniform_in(cfg.seed, rep * 8 + j, 203, 0.5, 2.0);
        std::vector<Vec> xis;
        const double xibox = xbox * std::pow(w, 1.0 + p.investor.m_star) / s.maxCoeff() /
                             cmd.S_half().norm();
        for (int i = 0; i < 25; ++i) {
            Vec xi(d);
            for (int j = 0; j < d; ++j)
                xi[j] = uniform_in(cfg.seed, std::uint64_t(i) * 64 + rep * 8 + j, 204, -xibox,
                                   xibox);
            xis.push_back(xi);
        }
        worst_full = std::max(
            worst_full, full_corrector_residual(cmd, p.market, p.investor, p.merton, t, w, s, xis));
    }
    cl.check("full_corrector_residual", worst_full <= 1e-4, "rel " + fmt(worst_full));

    // duality: Fenchel-Young equality at theta = phi_grad
    const ImpactModel& imp = p.sim->impact();
    double worst_gap = 0.0;
    Vec s0 = Eigen::Map<const Vec>(cfg.s0.data(), d);
    for (int i = 0; i < 10000; ++i) {
        Vec x(d), s(d);
        for (int j = 0; j < d; ++j) {
            x[j] = uniform_in(cfg.seed, std::uint64_t(i) * 32 + j, 301, -2.0, 2.0);
            s[j] = uniform_in(cfg.seed, std::uint64_t(i) * 32 + j, 302, 0.5, 2.0);
        }
        const Vec theta = imp.phi_grad(s, x);
        const double gap =
            std::abs(x.dot(theta) - imp.phi(s, x) - imp.execution_cost(s, theta));
        worst_gap = std::max(worst_gap, gap / (1.0 + std::abs(x.dot(theta))));
    }
    cl.check("fenchel_young_equality", worst_gap <= 1e-8, fmt(worst_gap));

    // bar_g: terminal value, closed form vs ODE tabulation
    const auto& sc = *p.second;
    cl.check("bar_g_terminal", sc.bar_g(p.investor.T) == 0.0);
    double worst_bg = 0.0;
    for (int i = 0; i <= 100; ++i) {
        const double t = p.investor.T * i / 100.0;
        worst_bg = std::max(worst_bg, std::abs(sc.bar_g(t) - sc.bar_g_closed_form(t)));
    }
    cl.check("bar_g_closed_vs_ode", worst_bg <= 1e-7, fmt(worst_bg));

    // Feynman-Kac representation of u
    const auto fk = sc.feynman_kac_check(cfg.t0, cfg.w0, cfg.fk_paths, cfg.seed);
    cl.check("feynman_kac", std::abs(fk.z_score) <= 3.0,
             "z " + fmt(fk.z_score) + " mc " + fmt(fk.mc_estimate) + " u " + fmt(fk.analytic));

    return cl.all_ok ? 0 : 1;
}

int cmd_simulate(const RunConfig& cfg, std::ostream& log) {
    Pipeline p = build_pipeline(cfg, true, &log);
    SimConfig sim_cfg = cfg.sim_config();
    const SimResult res = p.sim->run_paths(sim_cfg);
    fs::create_directories(cfg.output_dir);

    nlohmann::ordered_json j;
    j["config_hash"] = config_hash(cfg);
    j["epsilon"] = cfg.epsilon;
    j["n_paths"] = cfg.n_paths;
    j["n_steps"] = res.n_steps;
    j["dt"] = res.dt;
    j["mean_utility"] = res.mean_utility;
    j["std_err"] = res.std_err;
    j["frac_stopped_early"] = res.frac_stopped_early;
    j["frac_band_breach"] = res.frac_band_breach;
    j["frac_violation"] = res.frac_violation;
    j["med_max_absX"] = res.med_max_absX;
    j["med_max_wealth_gap"] = res.med_max_wealth_gap;
    if (cfg.epsilon == 0.0) {
        const double v0 = p.merton.frictionless_value(cfg.t0, cfg.w0);
        j["v0_analytic"] = v0;
        j["z_score_vs_v0"] = (res.mean_utility - v0) / res.std_err;
    }
    std::ofstream out(cfg.output_dir + "/simresult.json");
    out << j.dump(2) << "\n";
    log << "mean_utility = " << res.mean_utility << " +- " << res.std_err << "\n";

    for (int i = 0; i < cfg.trace_paths; ++i)
        p.sim->trace_path(sim_cfg, i, cfg.output_dir + "/trace_" + std::to_string(i) + ".csv");
    return 0;
}

int cmd_converge(const RunConfig& cfg, std::ostream& log) {
    Pipeline p = build_pipeline(cfg, true, &log);
    SimConfig base = cfg.sim_config();
    base.n_paths = cfg.validator_paths;

    ConvergenceReport rep =
        convergence_study(cfg.eps_grid, base, *p.sim, *p.second, cfg.ratio_tol, cfg.slack_tol);
    rep.config_hash = config_hash(cfg);
    if (rep.insufficient_paths)
        log << "warning: std_err_ratio above ratio_tol/2, increase validator.n_paths\n";

    fs::create_directories(cfg.output_dir);
    {
        std::ofstream out(cfg.output_dir + "/expansion.json");
        out << expansion_report(rep).dump(2) << "\n";
    }
    write_expansion_csv(rep, cfg.output_dir + "/expansion.csv");
    for (const auto& r : rep.per_eps)
        log << "eps " << r.eps << ": loss " << r.loss << " ratio " << r.loss_ratio << " +- "
            << r.se_ratio << " stopped " << r.frac_stopped << "\n";
    log << "convergence pass: " << (rep.pass ? "yes" : "no") << "\n";

    bool scaling_ok = true;
    if (cfg.scaling_eps_grid.size() >= 2) {
        SimConfig sbase = cfg.sim_config();
        sbase.n_paths = cfg.scaling_paths;
        sbase.monitor_mode = MonitorMode::record;
        ScalingReport srep = scaling_study(cfg.scaling_eps_grid, sbase, *p.sim, *p.second);
        srep.config_hash = config_hash(cfg);
        std::ofstream out(cfg.output_dir + "/scaling.json");
        out << scaling_report_json(srep).dump(2) << "\n";
        for (const auto& r : srep.per_eps)
            log << "scaling eps " << r.eps << ": loss " << r.loss << " ratio " << r.loss_ratio
                << " +- " << r.se_ratio << "\n";
        log << "scaling slope " << srep.slope << " pass: " << (srep.pass ? "yes" : "no") << "\n";
        scaling_ok = srep.pass;
    }
    return (rep.pass && scaling_ok) ? 0 : 1;
}

} // namespace impx
