// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stoclock Authors

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "stoclock/clock_sim.hpp"
#include "stoclock/parallel.hpp"
#include "stoclock/rng.hpp"
#include "stoclock/special_fn.hpp"
#include "stoclock/utility.hpp"

namespace stoclock {

struct MarketParams {
    double mu = 0.2;
    double sigma = 1.0;
    double rho = 0.5;
    double alpha = 1.0;
    double beta = 0.5;

    double theta() const { return mu / sigma; }

    void validate() const {
        if (!(sigma > 0.0)) throw std::domain_error("MarketParams: sigma must be positive");
        if (!(std::abs(rho) < 1.0)) throw std::domain_error("MarketParams: |rho| must be < 1");
        if (!(alpha > 0.0)) throw std::domain_error("MarketParams: alpha must be positive");
        if (!(beta > 0.0)) throw std::domain_error("MarketParams: beta must be positive");
    }
};

inline bool check_no_arbitrage(const MarketParams& p) { return p.alpha > 0.5 * p.theta() * p.theta(); }

enum class ConsumptionLaw { derived_psi_numerator, printed_521 };

inline std::string to_string(ConsumptionLaw law) {
    return law == ConsumptionLaw::derived_psi_numerator ? "derived_psi_numerator" : "printed_521";
}

inline std::string describe(ConsumptionLaw law) {
    return law == ConsumptionLaw::derived_psi_numerator
               ? "c = X psi(beta) / (1 - exp(-(1 - kappa) psi(beta)))"
               : "c = X (1 - exp(-psi(beta))) / (1 - exp(-(1 - kappa) psi(beta)))";
}

/// Remaining discounted clock mass from clock level k at r = 0: (1 - exp(-(1-k) psi)) / psi.
inline double clock_mass(double k, double psi_beta) { return -std::expm1(-(1.0 - k) * psi_beta) / psi_beta; }

inline double g_potential(double t, double r, double k, const MarketParams& p) {
    if (!(k >= 0.0 && k <= 1.0)) throw std::domain_error("g_potential: k must lie in [0, 1]");
    if (k == 1.0) return 0.0;
    const double psi_beta = psi_laplace(p.beta, p.alpha);
    return std::exp(-p.beta * t) * j_hitting(p.beta, std::abs(r), p.alpha) * clock_mass(k, psi_beta);
}

/// Consumption per unit wealth for a law at clock level kappa.
inline double consumption_fraction(ConsumptionLaw law, double kappa, double psi_beta) {
    const double denom = -std::expm1(-(1.0 - kappa) * psi_beta);
    if (law == ConsumptionLaw::derived_psi_numerator) return psi_beta / denom;
    return -std::expm1(-psi_beta) / denom;
}

/// Multiplier of the derived law's rate; the printed law is the derived law scaled by clock_mass(0).
inline double law_multiplier(ConsumptionLaw law, double psi_beta) {
    return law == ConsumptionLaw::derived_psi_numerator ? 1.0 : clock_mass(0.0, psi_beta);
}

struct Controls {
    double nu = 0.0;
    double pi = 0.0;
    double c_hat = 0.0;
};

inline Controls optimal_controls(double wealth, double r, double kappa, double price, const MarketParams& p,
                                 ConsumptionLaw law) {
    if (!(kappa < 1.0)) throw std::domain_error("optimal_controls: kappa must be < 1");
    if (!(wealth >= 0.0)) throw std::domain_error("optimal_controls: wealth must be nonnegative");
    Controls c;
    c.nu = nu_feedback(r, p.beta, p.alpha);
    c.pi = wealth / (p.sigma * price) * (p.theta() + p.rho * c.nu);
    c.c_hat = wealth * consumption_fraction(law, kappa, psi_laplace(p.beta, p.alpha));
    return c;
}

struct StrategySimConfig {
    double dt = 1e-3;
    double t_max = 40.0;
    double epsilon = 0.0;  // 0 selects sqrt(dt)/2
    double normalization = 0.0;
    double s0 = 1.0;
    std::uint64_t seed = 20260101;
    unsigned workers = 0;

    double band() const { return epsilon > 0.0 ? epsilon : 0.5 * std::sqrt(dt); }

    void validate(double alpha) const {
        if (!(dt > 0.0 && dt <= 1e-2)) throw std::domain_error("StrategySimConfig: dt must lie in (0, 1e-2]");
        if (!(t_max >= 10.0 / alpha)) throw std::domain_error("StrategySimConfig: t_max must be at least 10/alpha");
        if (!(normalization > 0.0)) throw std::domain_error("StrategySimConfig: normalization must be calibrated first");
        if (!(s0 > 0.0)) throw std::domain_error("StrategySimConfig: s0 must be positive");
    }
};

enum class WealthScheme {
    // dX = pi dS - c dkappa stepped by Euler; M is an exact discrete martingale.
    euler,
    // Exact constant-proportion trading return and consumption integrated exactly in kappa.
    proportional
};

/// A wealth-proportional feedback policy.
struct Policy {
    std::string name = "optimal";
    ConsumptionLaw law = ConsumptionLaw::derived_psi_numerator;
    double consumption_scale = 1.0;
    bool hedge_in_pi = true;
    // Multiplies nu inside pi; -1 reproduces the opposite-sign hedge for diagnostics.
    double hedge_scale = 1.0;
    // When positive, consume at this fixed rate instead of the feedback law.
    double constant_rate = 0.0;
};

struct StrategyPath {
    std::vector<double> times, R, kappa, S, X, Z, c_hat, nu, pi, M;
};

inline constexpr std::array<double, 3> martingale_checkpoints = {0.5, 1.0, 2.0};

struct PathSummary {
    double utility = 0.0;
    bool consumption_defect = false;
    bool truncated = false;
    bool negative_wealth = false;
    double tau = 0.0;
    double z_end = 0.0;
    double m_end = 0.0;
    double x_end = 0.0;
    double budget_integral = 0.0;
    double discounted_clock = 0.0;
    double max_abs_nu = 0.0;
    std::array<double, 3> m_checkpoint{};
};

/// Shared per-run constants so each path only draws noise.
class StrategyEngine {
public:
    StrategyEngine(const MarketParams& p, const StrategySimConfig& sim, std::shared_ptr<const NuTable> nu_table = nullptr)
        : p_(p), sim_(sim), nu_(std::move(nu_table)) {
        p_.validate();
        sim_.validate(p_.alpha);
        if (!check_no_arbitrage(p_)) throw std::domain_error("strategy_sim: alpha must exceed theta^2/2");
        if (!nu_) nu_ = std::make_shared<const NuTable>(p_.beta, p_.alpha);
        psi_beta_ = psi_laplace(p_.beta, p_.alpha);
        const double dt = sim_.dt;
        decay_ = std::exp(-p_.alpha * dt);
        const double var_i = -std::expm1(-2.0 * p_.alpha * dt) / (2.0 * p_.alpha);
        const double cov_wi = -std::expm1(-p_.alpha * dt) / p_.alpha;
        sqrt_dt_ = std::sqrt(dt);
        i_on_w_ = cov_wi / dt;
        i_resid_ = std::sqrt(std::max(0.0, var_i - cov_wi * cov_wi / dt));
        perp_ = std::sqrt(1.0 - p_.rho * p_.rho);
        clock_scale_ = sim_.normalization / sim_.band();
        steps_ = static_cast<std::size_t>(std::ceil(sim_.t_max / dt - 1e-9));
    }

    const MarketParams& market() const { return p_; }
    const StrategySimConfig& sim() const { return sim_; }
    const NuTable& nu_table() const { return *nu_; }
    std::shared_ptr<const NuTable> nu_table_ptr() const { return nu_; }
    double psi_beta() const { return psi_beta_; }
    /// y with x0 * y = (1 - exp(-psi(beta))) / psi(beta).
    double dual_start(double x0) const { return clock_mass(0.0, psi_beta_) / x0; }

    PathSummary run(std::uint64_t path, double x0, const Policy& policy, WealthScheme scheme, const UtilityField& f,
                    StrategyPath* record = nullptr) const {
        PathRng rng(sim_.seed, path);
        const double dt = sim_.dt;
        const double theta = p_.theta();
        const double eps = sim_.band();
        double t = 0.0, r = 0.0, kappa = 0.0, s = sim_.s0, x = x0;
        double log_z = std::log(dual_start(x0));
        double z = std::exp(log_z);
        double consumed = 0.0;  // sum Z_{m+1} c_m dkappa_m
        PathSummary out;
        std::size_t next_checkpoint = 0;
        auto push = [&](double nu, double pi, double c) {
            if (!record) return;
            record->times.push_back(t);
            record->R.push_back(r);
            record->kappa.push_back(kappa);
            record->S.push_back(s);
            record->X.push_back(x);
            record->Z.push_back(z);
            record->c_hat.push_back(c);
            record->nu.push_back(nu);
            record->pi.push_back(pi);
            record->M.push_back(x * z + consumed);
        };
        bool finished = false;
        std::size_t n = 0;
        for (; n < steps_; ++n) {
            const double nu = (*nu_)(r);
            out.max_abs_nu = std::max(out.max_abs_nu, std::abs(nu));
            const double hedge = policy.hedge_in_pi ? p_.rho * policy.hedge_scale * nu : 0.0;
            const double prop = theta + hedge;
            double c_rate;
            if (policy.constant_rate > 0.0) {
                c_rate = policy.constant_rate;
            } else {
                c_rate = x * policy.consumption_scale * consumption_fraction(policy.law, kappa, psi_beta_);
            }
            const double pi = x * prop / (p_.sigma * s);
            push(nu, pi, c_rate);

            const double g_w = rng.normal();
            const double g_i = rng.normal();
            const double g_b = rng.normal();
            const double dw = sqrt_dt_ * g_w;
            const double r_next = r * decay_ + i_on_w_ * dw + i_resid_ * g_i;
            const double db = p_.rho * dw + perp_ * sqrt_dt_ * g_b;
            const double s_next = s * std::exp(p_.sigma * db + (p_.mu - 0.5 * p_.sigma * p_.sigma) * dt);

            double dk = clock_scale_ * dt * band_fraction(r, r_next, eps);
            bool hit = false;
            if (kappa + dk >= 1.0) {
                dk = 1.0 - kappa;
                hit = true;
            }

            // Z uses the strategy-independent optimal nu so that M is comparable across arms.
            const double zq = nu * nu + (theta + p_.rho * nu) * (theta + p_.rho * nu) -
                              2.0 * p_.rho * nu * (theta + p_.rho * nu);
            log_z += nu * dw - (theta + p_.rho * nu) * db - 0.5 * zq * dt;
            const double z_next = std::exp(log_z);

            if (dk > 0.0 && c_rate <= 0.0) out.consumption_defect = true;
            if (dk > 0.0 && c_rate > 0.0) out.utility += u_eval(f, t, c_rate) * dk;
            out.discounted_clock += std::exp(-p_.beta * t) * dk;

            double x_next;
            if (scheme == WealthScheme::euler || policy.constant_rate > 0.0) {
                x_next = x + pi * (s_next - s) - c_rate * dk;
            } else {
                const double k = policy.consumption_scale * law_multiplier(policy.law, psi_beta_);
                const double u0 = (1.0 - kappa) * psi_beta_;
                const double u1 = (1.0 - kappa - dk) * psi_beta_;
                const double keep = hit ? 0.0 : std::pow(std::expm1(u1) / std::expm1(u0), k);
                const double growth = std::exp(prop * p_.sigma * db + (prop * p_.mu - 0.5 * prop * prop * p_.sigma * p_.sigma) * dt);
                x_next = x * keep * growth;
            }
            consumed += z_next * c_rate * dk;

            t = static_cast<double>(n + 1) * dt;
            r = r_next;
            s = s_next;
            kappa += dk;
            x = x_next;
            z = z_next;
            if (hit) kappa = 1.0;
            if (!hit && x < 0.0) out.negative_wealth = true;

            const double m = x * z + consumed;
            while (next_checkpoint < martingale_checkpoints.size() && t >= martingale_checkpoints[next_checkpoint] - 1e-12) {
                out.m_checkpoint[next_checkpoint++] = m;
            }
            if (hit) {
                finished = true;
                ++n;
                break;
            }
        }
        const double m_end = x * z + consumed;
        while (next_checkpoint < martingale_checkpoints.size()) out.m_checkpoint[next_checkpoint++] = m_end;
        push(0.0, 0.0, 0.0);
        out.truncated = !finished;
        out.tau = t;
        out.z_end = z;
        out.x_end = x;
        out.m_end = m_end;
        out.budget_integral = consumed;
        return out;
    }

private:
    MarketParams p_;
    StrategySimConfig sim_;
    std::shared_ptr<const NuTable> nu_;
    double psi_beta_ = 0.0;
    double decay_ = 0.0;
    double sqrt_dt_ = 0.0;
    double i_on_w_ = 0.0;
    double i_resid_ = 0.0;
    double perp_ = 0.0;
    double clock_scale_ = 0.0;
    std::size_t steps_ = 0;
};

inline StrategyPath simulate_optimal_run(const MarketParams& p, double x0, const StrategySimConfig& sim,
                                         ConsumptionLaw law, std::uint64_t path = 0) {
    if (!(x0 > 0.0)) throw std::domain_error("simulate_optimal_run: x0 must be positive");
    StrategyEngine engine(p, sim);
    StrategyPath record;
    Policy policy;
    policy.law = law;
    engine.run(path, x0, policy, WealthScheme::euler, UtilityField::log_utility(p.beta), &record);
    return record;
}

inline std::vector<PathSummary> simulate_ensemble(const StrategyEngine& engine, double x0, const Policy& policy,
                                                  WealthScheme scheme, const UtilityField& f, std::size_t n_paths) {
    return map_paths<PathSummary>(n_paths, engine.sim().workers, [&](std::size_t i) {
        return engine.run(i, x0, policy, scheme, f);
    });
}

struct UtilityEstimate {
    McEstimate estimate;
    double defect_fraction = 0.0;
    double truncated_fraction = 0.0;
};

inline UtilityEstimate estimate_expected_utility(const std::vector<PathSummary>& paths) {
    std::vector<double> samples;
    samples.reserve(paths.size());
    std::size_t defects = 0, truncated = 0;
    for (const auto& s : paths) {
        if (s.truncated) ++truncated;
        if (s.consumption_defect) {
            ++defects;
            continue;
        }
        samples.push_back(s.utility);
    }
    UtilityEstimate out;
    out.estimate = summarize(samples);
    out.estimate.n_paths = paths.size() - defects;
    out.defect_fraction = paths.empty() ? 0.0 : static_cast<double>(defects) / paths.size();
    out.truncated_fraction = paths.empty() ? 0.0 : static_cast<double>(truncated) / paths.size();
    return out;
}

/// Ensemble statistics of one run.
struct RunStats {
    std::size_t n_paths = 0;
    McEstimate z_ratio;
    McEstimate m_end;
    McEstimate x_end_abs;
    McEstimate budget_integral;
    McEstimate discounted_clock;
    UtilityEstimate utility;
    std::array<McEstimate, 3> m_checkpoint{};
    double truncated_fraction = 0.0;
    double negative_wealth_fraction = 0.0;
    double max_abs_nu = 0.0;
};

inline RunStats collect(const std::vector<PathSummary>& paths, double z0) {
    RunStats st;
    st.n_paths = paths.size();
    std::vector<double> a(paths.size()), b(paths.size()), c(paths.size()), d(paths.size()), e(paths.size());
    std::array<std::vector<double>, 3> cp;
    for (auto& v : cp) v.resize(paths.size());
    std::size_t trunc = 0, neg = 0;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        const auto& s = paths[i];
        a[i] = s.z_end / z0;
        b[i] = s.m_end;
        c[i] = std::abs(s.x_end);
        d[i] = s.budget_integral;
        e[i] = s.discounted_clock;
        for (std::size_t k = 0; k < 3; ++k) cp[k][i] = s.m_checkpoint[k];
        if (s.truncated) ++trunc;
        if (s.negative_wealth) ++neg;
        st.max_abs_nu = std::max(st.max_abs_nu, s.max_abs_nu);
    }
    st.z_ratio = summarize(a);
    st.m_end = summarize(b);
    st.x_end_abs = summarize(c);
    st.budget_integral = summarize(d);
    st.discounted_clock = summarize(e);
    for (std::size_t k = 0; k < 3; ++k) st.m_checkpoint[k] = summarize(cp[k]);
    st.utility = estimate_expected_utility(paths);
    const double n = paths.empty() ? 1.0 : static_cast<double>(paths.size());
    st.truncated_fraction = static_cast<double>(trunc) / n;
    st.negative_wealth_fraction = static_cast<double>(neg) / n;
    return st;
}

inline bool within_se(const McEstimate& e, double target, double k = 3.0) {
    return std::abs(e.mean - target) <= k * e.std_error;
}

struct LawReport {
    ConsumptionLaw law = ConsumptionLaw::derived_psi_numerator;
    RunStats coarse;
    RunStats fine;
    double budget_target = 0.0;
    double residual_drop = 0.0;  // 1 - E|X| fine / E|X| coarse
    bool budget_pass = false;
    bool residual_pass = false;
    bool passes() const { return budget_pass && residual_pass; }
};

struct AdjudicationReport {
    std::array<LawReport, 2> laws;
    int selected = -1;  // index into laws, -1 when neither or both pass
    int passing = 0;
    double utility_margin = 0.0;
    double utility_pooled_se = 0.0;
};

inline double pooled_se(const McEstimate& a, const McEstimate& b) {
    return std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error);
}

/// Runs both consumption laws at dt and dt/2 and keeps the one satisfying the budget and terminal-wealth tests.
inline AdjudicationReport adjudicate_consumption_law(const MarketParams& p, double x0, const StrategySimConfig& sim,
                                                     std::size_t n_paths, double required_drop = 0.30) {
    AdjudicationReport rep;
    StrategySimConfig fine_sim = sim;
    fine_sim.dt = 0.5 * sim.dt;
    if (sim.epsilon > 0.0) fine_sim.epsilon = sim.epsilon / std::sqrt(2.0);
    StrategyEngine coarse(p, sim);
    StrategyEngine fine(p, fine_sim, coarse.nu_table_ptr());
    const UtilityField f = UtilityField::log_utility(p.beta);
    const double target = x0 * coarse.dual_start(x0);
    const std::array<ConsumptionLaw, 2> laws = {ConsumptionLaw::derived_psi_numerator, ConsumptionLaw::printed_521};
    for (std::size_t k = 0; k < 2; ++k) {
        Policy pol;
        pol.name = to_string(laws[k]);
        pol.law = laws[k];
        LawReport& lr = rep.laws[k];
        lr.law = laws[k];
        lr.budget_target = target;
        lr.coarse = collect(simulate_ensemble(coarse, x0, pol, WealthScheme::euler, f, n_paths), coarse.dual_start(x0));
        lr.fine = collect(simulate_ensemble(fine, x0, pol, WealthScheme::euler, f, n_paths), fine.dual_start(x0));
        lr.budget_pass = within_se(lr.coarse.budget_integral, target) && within_se(lr.fine.budget_integral, target);
        lr.residual_drop = 1.0 - lr.fine.x_end_abs.mean / lr.coarse.x_end_abs.mean;
        lr.residual_pass = lr.residual_drop >= required_drop;
        if (lr.passes()) {
            ++rep.passing;
            rep.selected = static_cast<int>(k);
        }
    }
    if (rep.passing != 1) rep.selected = -1;
    const int winner = rep.selected >= 0 ? rep.selected : 0;
    const auto& w = rep.laws[static_cast<std::size_t>(winner)].coarse.utility.estimate;
    const auto& o = rep.laws[static_cast<std::size_t>(1 - winner)].coarse.utility.estimate;
    rep.utility_margin = w.mean - o.mean;
    rep.utility_pooled_se = pooled_se(w, o);
    return rep;
}

struct ArmResult {
    Policy policy;
    RunStats stats;
    double margin = 0.0;      // optimal minus this arm
    double pooled = 0.0;      // sqrt(se_opt^2 + se_arm^2)
    double paired_se = 0.0;   // std-error of the per-path difference
};

struct DominanceReport {
    std::vector<ArmResult> arms;  // arms[0] is the optimal policy
};

inline std::vector<Policy> comparison_arms(ConsumptionLaw law) {
    std::vector<Policy> arms(5);
    for (auto& a : arms) a.law = law;
    arms[0].name = "optimal";
    arms[1].name = "consumption_x0.7";
    arms[1].consumption_scale = 0.7;
    arms[2].name = "consumption_x1.4";
    arms[2].consumption_scale = 1.4;
    arms[3].name = "merton_no_rho_nu";
    arms[3].hedge_in_pi = false;
    arms[4].name = "nu_zero_in_pi";
    arms[4].hedge_in_pi = false;
    return arms;
}

inline DominanceReport compare_strategies(const MarketParams& p, double x0, const StrategySimConfig& sim,
                                          std::size_t n_paths,
                                          ConsumptionLaw law = ConsumptionLaw::derived_psi_numerator) {
    StrategyEngine engine(p, sim);
    const UtilityField f = UtilityField::log_utility(p.beta);
    DominanceReport rep;
    std::vector<std::vector<PathSummary>> runs;
    for (const auto& pol : comparison_arms(law)) {
        runs.push_back(simulate_ensemble(engine, x0, pol, WealthScheme::proportional, f, n_paths));
        ArmResult arm;
        arm.policy = pol;
        arm.stats = collect(runs.back(), engine.dual_start(x0));
        rep.arms.push_back(arm);
    }
    const auto& opt = rep.arms[0].stats.utility.estimate;
    for (std::size_t k = 0; k < rep.arms.size(); ++k) {
        auto& arm = rep.arms[k];
        arm.margin = opt.mean - arm.stats.utility.estimate.mean;
        arm.pooled = pooled_se(opt, arm.stats.utility.estimate);
        std::vector<double> diff;
        diff.reserve(n_paths);
        for (std::size_t i = 0; i < n_paths; ++i) {
            if (runs[0][i].consumption_defect || runs[k][i].consumption_defect) continue;
            diff.push_back(runs[0][i].utility - runs[k][i].utility);
        }
        arm.paired_se = summarize(diff).std_error;
    }
    return rep;
}

inline double remark_bound(const MarketParams& p) {
    const double theta = p.theta();
    return 1.0 + 0.5 * (theta + (theta * theta + 1.0) * std::sqrt(2.0 * std::numbers::pi));
}

struct BoundReport {
    double estimate = 0.0;
    double std_error = 0.0;
    double bound = 0.0;
    double margin = 0.0;
    bool pass = false;
};

inline BoundReport remark_bound_check(const MarketParams& p, const UtilityEstimate& best) {
    BoundReport b;
    b.estimate = best.estimate.mean;
    b.std_error = best.estimate.std_error;
    b.bound = remark_bound(p);
    b.margin = b.bound - b.estimate;
    b.pass = b.estimate <= b.bound;
    return b;
}

inline BoundReport remark_bound_check(const MarketParams& p, const StrategySimConfig& sim, std::size_t n_paths) {
    StrategyEngine engine(p, sim);
    Policy pol;
    auto paths = simulate_ensemble(engine, 1.0, pol, WealthScheme::proportional, UtilityField::log_utility(p.beta), n_paths);
    return remark_bound_check(p, estimate_expected_utility(paths));
}

}  // namespace stoclock
