// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stoclock Authors

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "stoclock/parallel.hpp"
#include "stoclock/rng.hpp"
#include "stoclock/special_fn.hpp"

namespace stoclock {

struct OUConfig {
    double alpha = 1.0;
    double r0 = 0.0;
    double dt = 1e-3;
    double t_max = 40.0;
    std::uint64_t seed = 20260101;
    // 1 for the OU law; 0 gives the deterministic skeleton used in tests.
    double noise_scale = 1.0;

    void validate() const {
        if (!(alpha > 0.0)) throw std::domain_error("OUConfig: alpha must be positive");
        if (!(dt > 0.0 && dt <= 1e-2)) throw std::domain_error("OUConfig: dt must lie in (0, 1e-2]");
        if (!(t_max >= 10.0 / alpha)) throw std::domain_error("OUConfig: t_max must be at least 10/alpha");
        if (!(noise_scale >= 0.0)) throw std::domain_error("OUConfig: noise_scale must be nonnegative");
    }

    std::size_t steps() const { return static_cast<std::size_t>(std::ceil(t_max / dt - 1e-9)); }
    double default_epsilon() const { return 0.5 * std::sqrt(dt); }
};

struct OUPath {
    std::vector<double> times;
    std::vector<double> values;
};

struct ClockPath {
    std::vector<double> times;
    std::vector<double> kappa;
    double epsilon = 0.0;
    double normalization = 0.0;
};

/// A stopping time on the grid, or a flag that the horizon was reached first.
struct GridTime {
    double time = 0.0;
    bool truncated = false;
};

/// One exact OU transition over dt: mean factor and innovation std-dev.
struct OUStep {
    double decay;
    double sd;

    OUStep(double alpha, double dt, double noise_scale = 1.0)
        : decay(std::exp(-alpha * dt)),
          sd(noise_scale * std::sqrt(-std::expm1(-2.0 * alpha * dt) / (2.0 * alpha))) {}

    double operator()(double r, double gaussian) const { return r * decay + sd * gaussian; }
};

/// Fraction of the linear segment from a to b that lies inside (-eps, eps).
inline double band_fraction(double a, double b, double eps) {
    if (a == b) return std::abs(a) < eps ? 1.0 : 0.0;
    const double lo = std::min(a, b);
    const double hi = std::max(a, b);
    const double inside = std::min(hi, eps) - std::max(lo, -eps);
    if (inside <= 0.0) return 0.0;
    return inside / (hi - lo);
}

inline OUPath simulate_ou(const OUConfig& config, std::uint64_t path_index = 0) {
    config.validate();
    const std::size_t n = config.steps();
    OUPath path;
    path.times.resize(n + 1);
    path.values.resize(n + 1);
    PathRng rng(config.seed, path_index);
    const OUStep step(config.alpha, config.dt, config.noise_scale);
    path.times[0] = 0.0;
    path.values[0] = config.r0;
    for (std::size_t i = 0; i < n; ++i) {
        path.times[i + 1] = static_cast<double>(i + 1) * config.dt;
        path.values[i + 1] = step(path.values[i], rng.normal());
    }
    return path;
}

inline ClockPath occupation_local_time(const OUPath& path, double epsilon, double normalization) {
    if (!(epsilon > 0.0)) throw std::domain_error("occupation_local_time: epsilon must be positive");
    if (!(normalization > 0.0)) throw std::domain_error("occupation_local_time: normalization must be positive");
    ClockPath clock;
    clock.times = path.times;
    clock.epsilon = epsilon;
    clock.normalization = normalization;
    clock.kappa.assign(path.times.size(), 0.0);
    const double scale = normalization / epsilon;
    double occupation = 0.0;
    for (std::size_t i = 0; i + 1 < path.times.size(); ++i) {
        const double dt = path.times[i + 1] - path.times[i];
        occupation += dt * band_fraction(path.values[i], path.values[i + 1], epsilon);
        clock.kappa[i + 1] = scale * occupation;
    }
    return clock;
}

inline GridTime inverse_local_time(const ClockPath& clock, double s) {
    if (!(s > 0.0)) throw std::domain_error("inverse_local_time: s must be positive");
    auto it = std::upper_bound(clock.kappa.begin(), clock.kappa.end(), s);
    if (it == clock.kappa.end()) return {clock.times.back(), true};
    return {clock.times[static_cast<std::size_t>(it - clock.kappa.begin())], false};
}

/// First grid time where the path started at r0 touches or crosses zero.
inline GridTime first_hitting_time(const OUConfig& config, std::uint64_t path_index = 0) {
    config.validate();
    if (config.r0 == 0.0) return {0.0, false};
    PathRng rng(config.seed, path_index);
    const OUStep step(config.alpha, config.dt, config.noise_scale);
    const std::size_t n = config.steps();
    double r = config.r0;
    for (std::size_t i = 0; i < n; ++i) {
        const double next = step(r, rng.normal());
        if (next == 0.0 || (next > 0.0) != (r > 0.0)) return {static_cast<double>(i + 1) * config.dt, false};
        r = next;
    }
    return {static_cast<double>(n) * config.dt, true};
}

struct LaplaceEstimate {
    McEstimate estimate;
    double target = 0.0;
    double truncated_fraction = 0.0;
    bool valid = true;
};

/// Raw occupation record of one path, kept only on steps where it grows.
///
/// Under normalization c the clock is kappa = (c / eps) * occupation, so the
/// same record answers tau_s for every c without re-simulating.
struct OccupationRecord {
    std::vector<std::uint32_t> end_step;
    std::vector<double> occupation;
    std::uint32_t steps_simulated = 0;
    double final_occupation = 0.0;
};

inline OccupationRecord record_occupation(const OUConfig& config, std::uint64_t path_index, double epsilon,
                                          double occupation_target) {
    PathRng rng(config.seed, path_index);
    const OUStep step(config.alpha, config.dt, config.noise_scale);
    const std::size_t n = config.steps();
    OccupationRecord rec;
    double r = config.r0;
    double occ = 0.0;
    std::size_t i = 0;
    for (; i < n; ++i) {
        const double next = step(r, rng.normal());
        const double frac = band_fraction(r, next, epsilon);
        r = next;
        if (frac > 0.0) {
            occ += config.dt * frac;
            rec.end_step.push_back(static_cast<std::uint32_t>(i + 1));
            rec.occupation.push_back(occ);
            if (occ > occupation_target) {
                ++i;
                break;
            }
        }
    }
    rec.steps_simulated = static_cast<std::uint32_t>(i);
    rec.final_occupation = occ;
    return rec;
}

/// Ensemble of occupation records sharing one configuration.
class ClockEnsemble {
public:
    ClockEnsemble(OUConfig config, std::size_t n_paths, double epsilon, double occupation_target, unsigned workers = 0)
        : config_(config), epsilon_(epsilon), occupation_target_(occupation_target) {
        config_.validate();
        if (!(epsilon > 0.0)) throw std::domain_error("ClockEnsemble: epsilon must be positive");
        records_ = map_paths<OccupationRecord>(n_paths, workers, [&](std::size_t p) {
            return record_occupation(config_, p, epsilon_, occupation_target_);
        });
    }

    const OUConfig& config() const { return config_; }
    double epsilon() const { return epsilon_; }
    std::size_t size() const { return records_.size(); }

    /// Largest s for which tau_s is resolved on every non-truncated path under normalization c.
    double max_level(double normalization) const { return normalization * occupation_target_ / epsilon_; }

    GridTime tau(std::size_t path, double s, double normalization) const {
        if (s <= 0.0) return {0.0, false};
        if (s > max_level(normalization) * (1.0 + 1e-12))
            throw std::domain_error("ClockEnsemble: requested level exceeds the recorded occupation");
        const auto& rec = records_[path];
        const double level = s * epsilon_ / normalization;
        auto it = std::upper_bound(rec.occupation.begin(), rec.occupation.end(), level);
        if (it == rec.occupation.end()) return {config_.t_max, true};
        const auto k = static_cast<std::size_t>(it - rec.occupation.begin());
        return {static_cast<double>(rec.end_step[k]) * config_.dt, false};
    }

    LaplaceEstimate laplace(double lambda, double s, double normalization) const {
        LaplaceEstimate out;
        std::vector<double> samples(records_.size());
        std::size_t truncated = 0;
        for (std::size_t p = 0; p < records_.size(); ++p) {
            const GridTime t = tau(p, s, normalization);
            if (t.truncated) ++truncated;
            samples[p] = std::exp(-lambda * t.time);
        }
        out.estimate = summarize(samples);
        out.target = s > 0.0 ? std::exp(-s * psi_laplace(lambda, config_.alpha)) : 1.0;
        out.truncated_fraction = records_.empty() ? 0.0 : static_cast<double>(truncated) / records_.size();
        out.valid = out.truncated_fraction <= 0.01;
        return out;
    }

    LaplaceEstimate mean_tau(double s, double normalization) const {
        LaplaceEstimate out;
        std::vector<double> samples(records_.size());
        std::size_t truncated = 0;
        for (std::size_t p = 0; p < records_.size(); ++p) {
            const GridTime t = tau(p, s, normalization);
            if (t.truncated) ++truncated;
            samples[p] = t.time;
        }
        out.estimate = summarize(samples);
        // E[tau_s] = s psi'(0+) = s sqrt(2 pi).
        out.target = s * std::sqrt(2.0 * std::numbers::pi);
        out.truncated_fraction = records_.empty() ? 0.0 : static_cast<double>(truncated) / records_.size();
        out.valid = out.truncated_fraction <= 0.01;
        return out;
    }

    /// Mean of the discounted clock integral int_0^{tau_1} exp(-beta t) dkappa_t.
    McEstimate discounted_clock_mass(double beta, double normalization) const {
        std::vector<double> samples(records_.size());
        const double scale = normalization / epsilon_;
        for (std::size_t p = 0; p < records_.size(); ++p) {
            const auto& rec = records_[p];
            double prev = 0.0;
            double acc = 0.0;
            for (std::size_t k = 0; k < rec.occupation.size(); ++k) {
                const double kappa_prev = scale * prev;
                const double kappa_next = std::min(1.0, scale * rec.occupation[k]);
                const double t_end = static_cast<double>(rec.end_step[k]) * config_.dt;
                acc += std::exp(-beta * t_end) * (kappa_next - kappa_prev);
                prev = rec.occupation[k];
                if (kappa_next >= 1.0) break;
            }
            samples[p] = acc;
        }
        return summarize(samples);
    }

private:
    OUConfig config_;
    double epsilon_;
    double occupation_target_;
    std::vector<OccupationRecord> records_;
};

struct CalibrationSpec {
    double lower = 0.125;
    double upper = 2.0;
    double relative_tolerance = 1e-5;
    int max_iterations = 200;
};

struct CalibrationResult {
    double normalization = 0.0;
    LaplaceEstimate at_target;
    int iterations = 0;
};

/// Bisection in log c for E[exp(-lambda* tau_1)] = exp(-psi(lambda*)) on one stored ensemble.
inline CalibrationResult calibrate_on(const ClockEnsemble& ensemble, double lambda_star, const CalibrationSpec& spec = {}) {
    if (!(lambda_star > 0.0)) throw std::domain_error("calibrate_normalization: lambda_star must be positive");
    const double target = std::exp(-psi_laplace(lambda_star, ensemble.config().alpha));
    auto gap = [&](double c) { return ensemble.laplace(lambda_star, 1.0, c).estimate.mean - target; };
    double lo = std::log(spec.lower);
    double hi = std::log(spec.upper);
    const double g_lo = gap(spec.lower);
    const double g_hi = gap(spec.upper);
    if (!(g_lo <= 0.0 && g_hi >= 0.0)) {
        std::ostringstream msg;
        msg << "calibrate_normalization: target not bracketed on [" << spec.lower << ", " << spec.upper
            << "] (gaps " << g_lo << ", " << g_hi << ")";
        throw numeric_error(msg.str());
    }
    int it = 0;
    while (hi - lo > spec.relative_tolerance && it < spec.max_iterations) {
        const double mid = 0.5 * (lo + hi);
        if (gap(std::exp(mid)) < 0.0)
            lo = mid;
        else
            hi = mid;
        ++it;
    }
    CalibrationResult out;
    out.normalization = std::exp(0.5 * (lo + hi));
    out.at_target = ensemble.laplace(lambda_star, 1.0, out.normalization);
    out.iterations = it;
    if (out.at_target.truncated_fraction > 0.01) {
        std::ostringstream msg;
        msg << "calibrate_normalization: truncated fraction " << out.at_target.truncated_fraction
            << " exceeds 1% at c=" << out.normalization << " (t_max=" << ensemble.config().t_max << ")";
        throw numeric_error(msg.str());
    }
    return out;
}

/// Occupation level needed so that tau_{s_max} is resolved for every c >= c_min.
inline double occupation_target_for(double s_max, double c_min, double epsilon) { return s_max * epsilon / c_min; }

inline CalibrationResult calibrate_normalization(double alpha, double lambda_star, OUConfig sim, std::size_t n_paths,
                                                 const CalibrationSpec& spec = {}, double epsilon = 0.0,
                                                 unsigned workers = 0) {
    sim.alpha = alpha;
    sim.r0 = 0.0;
    if (epsilon <= 0.0) epsilon = sim.default_epsilon();
    ClockEnsemble ensemble(sim, n_paths, epsilon, occupation_target_for(1.0, spec.lower, epsilon), workers);
    return calibrate_on(ensemble, lambda_star, spec);
}

inline LaplaceEstimate mc_laplace_tau(double alpha, double lambda, double s, OUConfig sim, std::size_t n_paths,
                                      double normalization, double epsilon = 0.0, unsigned workers = 0) {
    if (!(lambda > 0.0)) throw std::domain_error("mc_laplace_tau: lambda must be positive");
    sim.alpha = alpha;
    sim.r0 = 0.0;
    if (epsilon <= 0.0) epsilon = sim.default_epsilon();
    if (s <= 0.0) {
        LaplaceEstimate out;
        out.estimate = {1.0, 0.0, n_paths};
        out.target = 1.0;
        return out;
    }
    ClockEnsemble ensemble(sim, n_paths, epsilon, occupation_target_for(s, normalization, epsilon), workers);
    return ensemble.laplace(lambda, s, normalization);
}

inline LaplaceEstimate mc_laplace_hitting(double alpha, double lambda, double r, OUConfig sim, std::size_t n_paths,
                                          unsigned workers = 0) {
    if (!(lambda > 0.0)) throw std::domain_error("mc_laplace_hitting: lambda must be positive");
    sim.alpha = alpha;
    sim.r0 = r;
    sim.validate();
    auto times = map_paths<GridTime>(n_paths, workers, [&](std::size_t p) { return first_hitting_time(sim, p); });
    std::vector<double> samples(n_paths);
    std::size_t truncated = 0;
    for (std::size_t p = 0; p < n_paths; ++p) {
        if (times[p].truncated) ++truncated;
        samples[p] = std::exp(-lambda * times[p].time);
    }
    LaplaceEstimate out;
    out.estimate = summarize(samples);
    out.target = j_hitting(lambda, std::abs(r), alpha);
    out.truncated_fraction = n_paths ? static_cast<double>(truncated) / n_paths : 0.0;
    out.valid = out.truncated_fraction <= 0.01;
    return out;
}

/// Tolerance band used by the Laplace checks: 3 std-errors plus 2 sqrt(dt) lambda.
inline double laplace_band(const LaplaceEstimate& e, double lambda, double dt) {
    return 3.0 * e.estimate.std_error + 2.0 * std::sqrt(dt) * lambda;
}

}  // namespace stoclock
