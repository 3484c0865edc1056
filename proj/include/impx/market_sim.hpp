#ifndef IMPX_MARKET_SIM_HPP
#define IMPX_MARKET_SIM_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "impx/corrector_md.hpp"
#include "impx/impact.hpp"
#include "impx/market.hpp"

namespace impx {

enum class MonitorMode {
    liquidate,  // breach (or the pre-horizon window) starts a block liquidation
    record      // breaches only flagged; candidate runs to T, marked-to-market lump
};

enum class StopReason { none, weight_breach, wealth_floor, horizon };

struct SimConfig {
    double epsilon = 0.1;  // 0 selects the exact frictionless sampler
    int n_steps_base = 1000;
    double dt_factor = 0.1;
    int n_steps_override = 0;  // > 0 pins the grid (common-random-number studies)
    int noise_substeps = 1;    // sum this many sub-increments per step (dt-coupling studies)
    long n_paths = 10000;
    std::uint64_t seed = 1;
    double t0 = 0.0;
    double w0 = 1.0;
    Vec s0;
    bool start_at_h0 = true;
    Vec H_init;  // used when start_at_h0 is false
    MonitorMode monitor_mode = MonitorMode::liquidate;
    double guard_mult = 1.0;
    double cash_floor_mult = 0.75;
    double wealth_floor_rel = 1e-8;
    int n_threads = 0;  // 0 = hardware concurrency
};

struct PathRecord {
    double utility = 0.0;
    double terminal_wealth = 0.0;
    double max_absX = 0.0;
    double max_wealth_gap = 0.0;  // max_t |W_eps/W0 - 1| against the coupled frictionless leg
    StopReason reason = StopReason::none;
    bool band_breach = false;
    bool simplex_violation = false;
    double pair_loss = 0.0;  // (frictionless - frictional - CV) utility difference
};

struct SimResult {
    double mean_utility = 0.0;
    double std_err = 0.0;
    double frac_stopped_early = 0.0;  // weight-breach liquidations before the horizon window
    double frac_band_breach = 0.0;
    double frac_violation = 0.0;  // true simplex violations (short or negative cash)
    double med_max_absX = 0.0;
    double med_max_wealth_gap = 0.0;
    int n_steps = 0;
    double dt = 0.0;
    std::vector<PathRecord> paths;
};

struct PairedResult {
    SimResult sim;
    double loss_mean = 0.0;  // paired estimate of V0-leg minus frictional-leg utility
    double loss_se = 0.0;
};

// X = S ((H x S / W - pi) / (eps W)^{m*})
Vec rescaled_displacement(double W, const Vec& S, const Vec& H, double eps, const Vec& pi,
                          const Mat& S_half, double m_star);

// theta_j = -(eps W)^{-m*} (W / (kappa^{m-1} s_j)) sum_i |w~_{x_i}(X)|^{m-2} w~_{x_i}(X) (S^{-1})_{ij}
Vec candidate_rate(double W, const Vec& S, const Vec& H, double eps, const Vec& pi,
                   const CorrectorMD& cmd);

// Exact log-normal price update.
Vec step_prices(const Vec& S, double dt, const Vec& dB, const MarketParams& market);

// One Euler wealth update; returns W'. cost_rate is theta . f(S, eps theta).
double euler_wealth_step(double W, const Vec& H, const Vec& S, double c, double cost_rate,
                         double dt, const Vec& sdB, const MarketParams& market);

// Impact cost per unit time at trading rate theta under scale eps:
//   sum_j theta_j f_j(S, eps theta) = (1/eps) kappa (m-1)/m sum_j |(S(eps theta x S))_j|^{m/(m-1)}
double impact_cost_rate(const ImpactModel& impact, const Vec& S, const Vec& theta, double eps);

// Steps implied by dt = min(dt_factor eps^{2m*}, (T-t0)/n_steps_base).
int steps_for_config(const SimConfig& cfg, double T, double m_star);

class MarketSim {
  public:
    MarketSim(MarketParams market, InvestorImpactParams inv, MertonSolution merton,
              std::shared_ptr<const CorrectorMD> cmd);

    // eps > 0: Euler engine under the candidate strategy.
    // eps == 0: exact frictionless sampler (no discretization bias in wealth).
    SimResult run_paths(const SimConfig& cfg) const;

    // Frictional leg and a coupled frictionless leg on the same grid and noise,
    // with a martingale control variate on the utility difference.
    PairedResult run_paths_paired(const SimConfig& cfg) const;

    // Per-step trace of one path (CSV: t,S...,W,H...,X...,theta...,c).
    void trace_path(const SimConfig& cfg, long path_index, const std::string& csv_path) const;

    const MarketParams& market() const { return market_; }
    const MertonSolution& merton() const { return merton_; }
    const InvestorImpactParams& investor() const { return inv_; }
    const CorrectorMD& corrector() const { return *cmd_; }
    const ImpactModel& impact() const { return impact_; }

  private:
    struct StepHook;
    void run_block(const SimConfig& cfg, long p_begin, long p_end, bool paired, int n_steps,
                   std::vector<PathRecord>& records, StepHook* hook) const;
    SimResult reduce(std::vector<PathRecord>&& records, int n_steps, double dt) const;
    SimResult run_frictionless_exact(const SimConfig& cfg) const;

    MarketParams market_;
    InvestorImpactParams inv_;
    MertonSolution merton_;
    std::shared_ptr<const CorrectorMD> cmd_;
    ImpactModel impact_;
};

} // namespace impx

#endif
