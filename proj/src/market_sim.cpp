#include "impx/market_sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

#include "impx/rng.hpp"
#include "impx/util.hpp"

namespace impx {

Vec rescaled_displacement(double W, const Vec& S, const Vec& H, double eps, const Vec& pi,
                          const Mat& S_half, double m_star) {
    if (W <= 0.0) throw invalid_parameter("rescaled_displacement: wealth must be positive");
    const double scale = std::pow(eps * W, -m_star);
    Vec v = ((H.array() * S.array() / W) - pi.array()).matrix() * scale;
    return S_half * v;
}

Vec candidate_rate(double W, const Vec& S, const Vec& H, double eps, const Vec& pi,
                   const CorrectorMD& cmd) {
    const Vec X = rescaled_displacement(W, S, H, eps, pi, cmd.S_half(), cmd.m_star());
    const Vec wx = cmd.varpi_tilde_grad(X);
    Vec G(wx.size());
    for (int i = 0; i < wx.size(); ++i) G[i] = spow(wx[i], cmd.m() - 1.0);
    const double pref =
        -std::pow(eps * W, -cmd.m_star()) * W / std::pow(cmd.kappa(), cmd.m() - 1.0);
    Vec theta = cmd.S_half_inv().transpose() * G;
    for (int j = 0; j < theta.size(); ++j) theta[j] = pref * theta[j] / S[j];
    return theta;
}

Vec step_prices(const Vec& S, double dt, const Vec& dB, const MarketParams& market) {
    Vec out(S.size());
    for (int j = 0; j < S.size(); ++j) {
        const double vol2 = market.sigma.row(j).squaredNorm();
        out[j] = S[j] * std::exp((market.mu[j] - 0.5 * vol2) * dt + market.sigma.row(j).dot(dB));
    }
    return out;
}

double euler_wealth_step(double W, const Vec& H, const Vec& S, double c, double cost_rate,
                         double dt, const Vec& sdB, const MarketParams& market) {
    double dW = (market.r * W - c) * dt - cost_rate * dt;
    for (int j = 0; j < H.size(); ++j)
        dW += H[j] * S[j] * ((market.mu[j] - market.r) * dt + sdB[j]);
    return W + dW;
}

double impact_cost_rate(const ImpactModel& impact, const Vec& S, const Vec& theta, double eps) {
    if (eps <= 0.0) return 0.0;
    return impact.execution_cost(S, (eps * theta.array()).matrix()) / eps;
}

int steps_for_config(const SimConfig& cfg, double T, double m_star) {
    const double horizon = T - cfg.t0;
    if (horizon <= 0.0) throw invalid_parameter("sim: t0 must be before T");
    if (cfg.n_steps_override > 0) return cfg.n_steps_override;
    double dt = horizon / double(cfg.n_steps_base);
    if (cfg.epsilon > 0.0)
        dt = std::min(dt, cfg.dt_factor * std::pow(cfg.epsilon, 2.0 * m_star));
    return int(std::ceil(horizon / dt - 1e-9));
}

MarketSim::MarketSim(MarketParams market, InvestorImpactParams inv, MertonSolution merton,
                     std::shared_ptr<const CorrectorMD> cmd)
    : market_(std::move(market)),
      inv_(inv),
      merton_(std::move(merton)),
      cmd_(std::move(cmd)),
      impact_(cmd_->S_half(), cmd_->S_half_inv(), inv.kappa, inv.m) {}

struct MarketSim::StepHook {
    std::function<void(double t, const Vec& S, double W, const Vec& H, const Vec& X,
                       const Vec& theta, double c)>
        fn;
};

namespace {

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    std::nth_element(v.begin(), v.begin() + mid - 1, v.end());
    return 0.5 * (v[mid - 1] + hi);
}

} // namespace

void MarketSim::run_block(const SimConfig& cfg, long p_begin, long p_end, bool paired,
                          int n_steps, std::vector<PathRecord>& records, StepHook* hook) const {
    const int d = market_.d;
    const double T = inv_.T;
    const double eps = cfg.epsilon;
    const double m = inv_.m, m_star = inv_.m_star, R = inv_.R;
    const double horizon = T - cfg.t0;
    const double dt = horizon / n_steps;
    const double sqdt = std::sqrt(dt);
    const Vec& pi = merton_.pi();
    const double pi_star = merton_.pi_star();
    const double band = pi_star / (4.0 * d) * cfg.guard_mult;
    const double cash_floor = pi_star * cfg.cash_floor_mult;
    const double wealth_floor = cfg.wealth_floor_rel * cfg.w0;
    const double liq_window = std::pow(eps, 2.0 * m_star);
    const Mat& Shalf = cmd_->S_half();
    const Mat ShalfInvT = cmd_->S_half_inv().transpose();
    const double kpow = std::pow(inv_.kappa, m - 1.0);
    const double cost_pref = inv_.kappa * (m - 1.0) / m;
    const double cost_p = m / (m - 1.0);

    // deterministic per-step tables shared by every path in the block
    std::vector<double> g_k(n_steps + 1), ginv_k(n_steps + 1), pdrift(d), vol2(d);
    for (int k = 0; k <= n_steps; ++k) {
        const double t = cfg.t0 + k * dt;
        g_k[k] = merton_.g(std::min(t, T));
        ginv_k[k] = merton_.g_inv_pow(std::min(t, T));
    }
    for (int j = 0; j < d; ++j) {
        vol2[j] = market_.sigma.row(j).squaredNorm();
        pdrift[j] = (market_.mu[j] - 0.5 * vol2[j]) * dt;
    }
    const Vec H_start = cfg.start_at_h0 ? merton_.h0_shares(cfg.w0, cfg.s0) : cfg.H_init;
    if (H_start.size() != d) throw invalid_parameter("sim: H_init has wrong dimension");

    Vec S(d), H(d), z(d), dB(d), sdB(d), rho(d), X(d), wx(d), theta(d), y(d);
    for (long p = p_begin; p < p_end; ++p) {
        PathRecord rec;
        S = cfg.s0;
        double W = cfg.w0;
        H = H_start;
        double Wf = cfg.w0;  // coupled frictionless leg
        double util = 0.0, utilf = 0.0, Z = 0.0;
        double prevU = 0.0, prevUf = 0.0;
        enum class Phase { trading, liquidating, cash } phase = Phase::trading;
        double liq_end = T;
        bool floored = false;
        theta.setZero();
        X.setZero();

        for (int k = 0; k < n_steps; ++k) {
            const double t = cfg.t0 + k * dt;
            if (cfg.noise_substeps <= 1) {
                philox_normals(cfg.seed, std::uint64_t(p), std::uint32_t(k), z.data(), d);
                for (int j = 0; j < d; ++j) dB[j] = sqdt * z[j];
            } else {
                // sub-increments of the same Brownian path, for dt-halving couplings
                const double sq = std::sqrt(dt / cfg.noise_substeps);
                dB.setZero();
                for (int sub = 0; sub < cfg.noise_substeps; ++sub) {
                    philox_normals(cfg.seed, std::uint64_t(p),
                                   std::uint32_t(k * cfg.noise_substeps + sub), z.data(), d);
                    for (int j = 0; j < d; ++j) dB[j] += sq * z[j];
                }
            }
            for (int j = 0; j < d; ++j) sdB[j] = market_.sigma.row(j).dot(dB);

            double c = ginv_k[k] * W;
            if (phase == Phase::trading) {
                rho = (H.array() * S.array() / W).matrix();
                const double cash_frac = 1.0 - rho.sum();
                if (rho.minCoeff() < 0.0 || cash_frac < 0.0) rec.simplex_violation = true;
                bool breach = cash_frac < cash_floor;
                for (int j = 0; j < d && !breach; ++j)
                    breach = std::abs(rho[j] - pi[j]) > band;
                rec.band_breach = rec.band_breach || breach;

                const double xscale = std::pow(eps * W, -m_star);
                X = Shalf * ((rho.array() - pi.array()).matrix() * xscale);
                rec.max_absX = std::max(rec.max_absX, X.norm());

                const bool force_liq = cfg.monitor_mode == MonitorMode::liquidate &&
                                       t >= T - liq_window - 0.5 * dt;
                if (cfg.monitor_mode == MonitorMode::liquidate && (breach || force_liq)) {
                    const double window = std::min(liq_window, T - t);
                    theta = -H / window;
                    liq_end = t + window;
                    phase = Phase::liquidating;
                    rec.reason = (breach && !force_liq) ? StopReason::weight_breach
                                                        : StopReason::horizon;
                } else {
                    for (int i = 0; i < d; ++i)
                        wx[i] = spow(cmd_->beta()[i] * cmd_->gamma()[i] *
                                         cmd_->c1d().eval_dw(cmd_->gamma()[i] * X[i]),
                                     m - 1.0);
                    const double pref = -std::pow(eps * W, -m_star) * W / kpow;
                    theta = ShalfInvT * wx;
                    for (int j = 0; j < d; ++j) theta[j] = pref * theta[j] / S[j];
                }
            }
            if (phase == Phase::liquidating) {
                const double cash = W - H.dot(S);
                c = std::min(c, std::max(0.0, 0.98 * cash / dt));
            } else if (phase == Phase::cash) {
                theta.setZero();
            }

            // impact cost rate theta . f(S, eps theta)
            double cost = 0.0;
            if (eps > 0.0 && phase != Phase::cash) {
                y = Shalf * ((eps * theta.array()) * S.array()).matrix();
                double acc = 0.0;
                for (int j = 0; j < d; ++j) acc += apow(y[j], cost_p);
                cost = cost_pref * acc / eps;
            }

            const double cf = ginv_k[k] * Wf;
            const double curU = merton_.utility(c), curUf = merton_.utility(cf);
            if (k > 0) {
                util += 0.5 * (prevU + curU) * dt;
                utilf += 0.5 * (prevUf + curUf) * dt;
            }
            prevU = curU;
            prevUf = curUf;

            if (paired && phase == Phase::trading) {
                double proj = 0.0;
                for (int j = 0; j < d; ++j) proj += (rho[j] - pi[j]) * sdB[j];
                Z += g_k[k] * std::pow(W, 1.0 - R) * proj;
            }

            if (hook) hook->fn(t, S, W, H, X, theta, c);

            double dW = (market_.r * W - c) * dt - cost * dt;
            for (int j = 0; j < d; ++j)
                dW += H[j] * S[j] * ((market_.mu[j] - market_.r) * dt + sdB[j]);
            W += dW;
            double dWf = (market_.r * Wf - cf) * dt;
            for (int j = 0; j < d; ++j)
                dWf += Wf * pi[j] * ((market_.mu[j] - market_.r) * dt + sdB[j]);
            Wf += dWf;

            H += theta * dt;
            if (phase == Phase::liquidating && cfg.t0 + (k + 1) * dt >= liq_end - 0.5 * dt) {
                H.setZero();
                phase = Phase::cash;
            }
            for (int j = 0; j < d; ++j) S[j] *= std::exp(pdrift[j] + sdB[j]);

            rec.max_wealth_gap = std::max(rec.max_wealth_gap, std::abs(W / Wf - 1.0));
            if (W <= wealth_floor) {
                rec.reason = StopReason::wealth_floor;
                W = wealth_floor;
                floored = true;
                break;
            }
        }

        // terminal half-interval of the consumption trapezoid plus the lump
        if (!floored) {
            util += 0.5 * (prevU + merton_.utility(ginv_k[n_steps] * W)) * dt;
            utilf += 0.5 * (prevUf + merton_.utility(ginv_k[n_steps] * Wf)) * dt;
        }
        util += merton_.utility(std::max(W, 0.0));
        utilf += merton_.utility(Wf);

        rec.utility = util;
        rec.terminal_wealth = W;
        rec.pair_loss = utilf - util + Z;
        records[size_t(p)] = rec;
    }
}

SimResult MarketSim::reduce(std::vector<PathRecord>&& records, int n_steps, double dt) const {
    SimResult out;
    out.n_steps = n_steps;
    out.dt = dt;
    const long n = long(records.size());
    double sum = 0.0, sumsq = 0.0;
    long stopped = 0, breached = 0, violated = 0;
    std::vector<double> maxX(records.size()), gap(records.size());
    for (long p = 0; p < n; ++p) {
        const PathRecord& r = records[size_t(p)];
        sum += r.utility;
        sumsq += r.utility * r.utility;
        stopped += r.reason == StopReason::weight_breach ? 1 : 0;
        breached += r.band_breach ? 1 : 0;
        violated += r.simplex_violation ? 1 : 0;
        maxX[size_t(p)] = r.max_absX;
        gap[size_t(p)] = r.max_wealth_gap;
    }
    out.mean_utility = sum / double(n);
    if (n > 1) {
        const double var = (sumsq - double(n) * out.mean_utility * out.mean_utility) /
                           double(n - 1);
        out.std_err = std::sqrt(std::max(0.0, var) / double(n));
    }
    out.frac_stopped_early = double(stopped) / double(n);
    out.frac_band_breach = double(breached) / double(n);
    out.frac_violation = double(violated) / double(n);
    out.med_max_absX = median_of(std::move(maxX));
    out.med_max_wealth_gap = median_of(std::move(gap));
    out.paths = std::move(records);
    return out;
}

SimResult MarketSim::run_frictionless_exact(const SimConfig& cfg) const {
    const double T = inv_.T;
    const int n_steps = steps_for_config(cfg, T, inv_.m_star);
    const double dt = (T - cfg.t0) / n_steps;
    const Vec& pi = merton_.pi();
    const Mat cov = market_.covariance();
    const double sig_p2 = pi.dot(cov * pi);
    const double sig_p = std::sqrt(sig_p2);
    const double drift = market_.r + pi.dot((market_.mu.array() - market_.r).matrix()) -
                         0.5 * sig_p2;

    std::vector<double> cons(n_steps), ginv(n_steps + 1);
    for (int k = 0; k < n_steps; ++k)
        cons[k] = merton_.integral_g_inv_pow(cfg.t0 + k * dt, cfg.t0 + (k + 1) * dt);
    for (int k = 0; k <= n_steps; ++k) ginv[k] = merton_.g_inv_pow(cfg.t0 + k * dt);

    std::vector<PathRecord> records(size_t(cfg.n_paths));
    auto worker = [&](long p_begin, long p_end) {
        for (long p = p_begin; p < p_end; ++p) {
            double logW = std::log(cfg.w0);
            double util = 0.0;
            double prevU = merton_.utility(ginv[0] * cfg.w0);
            for (int k = 0; k < n_steps; ++k) {
                double z0, z1;
                philox_normal2(cfg.seed, std::uint64_t(p), std::uint32_t(k), 0u, z0, z1);
                logW += drift * dt - cons[k] + sig_p * std::sqrt(dt) * z0;
                const double curU = merton_.utility(ginv[k + 1] * std::exp(logW));
                util += 0.5 * (prevU + curU) * dt;
                prevU = curU;
            }
            PathRecord rec;
            rec.terminal_wealth = std::exp(logW);
            rec.utility = util + merton_.utility(rec.terminal_wealth);
            rec.reason = StopReason::none;
            records[size_t(p)] = rec;
        }
    };

    const int hw = cfg.n_threads > 0 ? cfg.n_threads
                                     : std::max(1u, std::thread::hardware_concurrency());
    if (hw <= 1 || cfg.n_paths < 256) {
        worker(0, cfg.n_paths);
    } else {
        std::vector<std::thread> pool;
        const long block = (cfg.n_paths + hw - 1) / hw;
        for (int i = 0; i < hw; ++i) {
            const long lo = i * block, hi = std::min<long>(cfg.n_paths, lo + block);
            if (lo < hi) pool.emplace_back(worker, lo, hi);
        }
        for (auto& th : pool) th.join();
    }
    return reduce(std::move(records), n_steps, dt);
}

SimResult MarketSim::run_paths(const SimConfig& cfg) const {
    if (cfg.s0.size() != market_.d) throw invalid_parameter("sim: s0 has wrong dimension");
    if (cfg.n_paths < 1) throw invalid_parameter("sim: n_paths must be >= 1");
    if (cfg.epsilon == 0.0) return run_frictionless_exact(cfg);
    if (cfg.epsilon < 0.0) throw invalid_parameter("sim: epsilon must be >= 0");

    const int n_steps = steps_for_config(cfg, inv_.T, inv_.m_star);
    std::vector<PathRecord> records(size_t(cfg.n_paths));
    const int hw = cfg.n_threads > 0 ? cfg.n_threads
                                     : std::max(1u, std::thread::hardware_concurrency());
    if (hw <= 1 || cfg.n_paths < 64) {
        run_block(cfg, 0, cfg.n_paths, false, n_steps, records, nullptr);
    } else {
        std::vector<std::thread> pool;
        const long block = (cfg.n_paths + hw - 1) / hw;
        for (int i = 0; i < hw; ++i) {
            const long lo = i * block, hi = std::min<long>(cfg.n_paths, lo + block);
            if (lo < hi)
                pool.emplace_back([this, &cfg, lo, hi, n_steps, &records] {
                    run_block(cfg, lo, hi, false, n_steps, records, nullptr);
                });
        }
        for (auto& th : pool) th.join();
    }
    return reduce(std::move(records), n_steps, (inv_.T - cfg.t0) / n_steps);
}

PairedResult MarketSim::run_paths_paired(const SimConfig& cfg) const {
    if (cfg.s0.size() != market_.d) throw invalid_parameter("sim: s0 has wrong dimension");
    if (!(cfg.epsilon > 0.0)) throw invalid_parameter("paired run requires epsilon > 0");
    const int n_steps = steps_for_config(cfg, inv_.T, inv_.m_star);
    std::vector<PathRecord> records(size_t(cfg.n_paths));
    const int hw = cfg.n_threads > 0 ? cfg.n_threads
                                     : std::max(1u, std::thread::hardware_concurrency());
    if (hw <= 1 || cfg.n_paths < 64) {
        run_block(cfg, 0, cfg.n_paths, true, n_steps, records, nullptr);
    } else {
        std::vector<std::thread> pool;
        const long block = (cfg.n_paths + hw - 1) / hw;
        for (int i = 0; i < hw; ++i) {
            const long lo = i * block, hi = std::min<long>(cfg.n_paths, lo + block);
            if (lo < hi)
                pool.emplace_back([this, &cfg, lo, hi, n_steps, &records] {
                    run_block(cfg, lo, hi, true, n_steps, records, nullptr);
                });
        }
        for (auto& th : pool) th.join();
    }

    PairedResult out;
    double sum = 0.0, sumsq = 0.0;
    for (const PathRecord& r : records) {
        sum += r.pair_loss;
        sumsq += r.pair_loss * r.pair_loss;
    }
    const double n = double(cfg.n_paths);
    out.loss_mean = sum / n;
    if (cfg.n_paths > 1) {
        const double var = (sumsq - n * out.loss_mean * out.loss_mean) / (n - 1.0);
        out.loss_se = std::sqrt(std::max(0.0, var) / n);
    }
    out.sim = reduce(std::move(records), n_steps, (inv_.T - cfg.t0) / n_steps);
    return out;
}

void MarketSim::trace_path(const SimConfig& cfg, long path_index,
                           const std::string& csv_path) const {
    std::ofstream csv(csv_path);
    if (!csv) throw solver_error("trace_path: cannot write " + csv_path);
    csv.precision(12);
    const int d = market_.d;
    csv << "t";
    for (int j = 0; j < d; ++j) csv << ",S" << j;
    csv << ",W_eps";
    for (int j = 0; j < d; ++j) csv << ",H" << j;
    for (int j = 0; j < d; ++j) csv << ",X" << j;
    for (int j = 0; j < d; ++j) csv << ",theta" << j;
    csv << ",c\n";
    StepHook hook;
    hook.fn = [&](double t, const Vec& S, double W, const Vec& H, const Vec& X, const Vec& theta,
                  double c) {
        csv << t;
        for (int j = 0; j < d; ++j) csv << ',' << S[j];
        csv << ',' << W;
        for (int j = 0; j < d; ++j) csv << ',' << H[j];
        for (int j = 0; j < d; ++j) csv << ',' << X[j];
        for (int j = 0; j < d; ++j) csv << ',' << theta[j];
        csv << ',' << c << '\n';
    };
    const int n_steps = steps_for_config(cfg, inv_.T, inv_.m_star);
    std::vector<PathRecord> records(size_t(path_index) + 1);
    run_block(cfg, path_index, path_index + 1, false, n_steps, records, &hook);
}

} // namespace impx
