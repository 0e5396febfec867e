// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stoclock Authors

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "stoclock/clock_sim.hpp"

using namespace stoclock;

namespace {

OUConfig small_config() {
    OUConfig c;
    c.dt = 1e-3;
    c.t_max = 20.0;
    c.seed = 777;
    return c;
}

}  // namespace

TEST(OUConfig, Validation) {
    OUConfig c;
    c.alpha = 0.0;
    EXPECT_THROW(c.validate(), std::domain_error);
    c = {};
    c.dt = 0.05;
    EXPECT_THROW(c.validate(), std::domain_error);
    c = {};
    c.t_max = 5.0;
    EXPECT_THROW(c.validate(), std::domain_error);
    c = {};
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.steps(), 40000u);
}

TEST(BandFraction, HandCases) {
    EXPECT_DOUBLE_EQ(band_fraction(-1.0, 1.0, 0.5), 0.5);
    EXPECT_DOUBLE_EQ(band_fraction(0.2, 0.3, 0.5), 1.0);
    EXPECT_DOUBLE_EQ(band_fraction(0.6, 0.9, 0.5), 0.0);
    EXPECT_DOUBLE_EQ(band_fraction(0.0, 1.0, 0.25), 0.25);
    EXPECT_DOUBLE_EQ(band_fraction(0.1, 0.1, 0.25), 1.0);
    EXPECT_DOUBLE_EQ(band_fraction(1.0, 0.0, 0.25), band_fraction(0.0, 1.0, 0.25));
}

TEST(SimulateOU, DeterministicSkeletonDecaysExponentially) {
    OUConfig c = small_config();
    c.r0 = 2.0;
    c.noise_scale = 0.0;
    c.alpha = 1.5;
    const auto path = simulate_ou(c);
    for (std::size_t i = 0; i < path.times.size(); i += 997)
        EXPECT_NEAR(path.values[i], 2.0 * std::exp(-1.5 * path.times[i]), 1e-12);
}

TEST(SimulateOU, BitForBitDeterminism) {
    const auto a = simulate_ou(small_config(), 5);
    const auto b = simulate_ou(small_config(), 5);
    EXPECT_EQ(a.values, b.values);
    const auto c = simulate_ou(small_config(), 6);
    EXPECT_NE(a.values, c.values);
}

TEST(SimulateOU, ExactTransitionMoments) {
    // After time t from r0 the law is N(r0 e^{-alpha t}, (1 - e^{-2 alpha t}) / (2 alpha)).
    OUConfig c = small_config();
    c.r0 = 1.0;
    c.alpha = 2.0;
    c.t_max = 5.0;
    const std::size_t n = 4000;
    const std::size_t idx = 500;  // t = 0.5
    std::vector<double> v(n);
    for (std::size_t p = 0; p < n; ++p) v[p] = simulate_ou(c, p).values[idx];
    const auto e = summarize(v);
    const double mean = std::exp(-1.0);
    const double var = -std::expm1(-2.0) / 4.0;
    EXPECT_NEAR(e.mean, mean, 4.0 * std::sqrt(var / n));
    double ss = 0.0;
    for (double x : v) ss += (x - e.mean) * (x - e.mean);
    EXPECT_NEAR(ss / (n - 1), var, 5.0 * var * std::sqrt(2.0 / n));
}

TEST(OccupationLocalTime, LinearInterpolationOnHandPath) {
    OUPath path{{0.0, 1.0, 2.0, 3.0}, {-1.0, 1.0, 0.0, 0.0}};
    const auto clock = occupation_local_time(path, 0.5, 1.0);
    EXPECT_DOUBLE_EQ(clock.kappa[1], 0.5 / 0.5);
    EXPECT_DOUBLE_EQ(clock.kappa[2], (0.5 + 0.5) / 0.5);
    EXPECT_DOUBLE_EQ(clock.kappa[3], (0.5 + 0.5 + 1.0) / 0.5);
    EXPECT_THROW(occupation_local_time(path, 0.0, 1.0), std::domain_error);
    EXPECT_THROW(occupation_local_time(path, 0.5, 0.0), std::domain_error);
}

TEST(InverseLocalTime, FirstCrossingAndTruncation) {
    ClockPath clock;
    clock.times = {0.0, 1.0, 2.0, 3.0};
    clock.kappa = {0.0, 0.5, 0.5, 2.0};
    EXPECT_DOUBLE_EQ(inverse_local_time(clock, 0.25).time, 1.0);
    EXPECT_DOUBLE_EQ(inverse_local_time(clock, 0.5).time, 3.0);
    const auto t = inverse_local_time(clock, 5.0);
    EXPECT_TRUE(t.truncated);
    EXPECT_THROW(inverse_local_time(clock, 0.0), std::domain_error);
}

TEST(InverseLocalTime, NondecreasingInLevel) {
    const auto clock = occupation_local_time(simulate_ou(small_config(), 3), small_config().default_epsilon(), 0.35);
    double prev = 0.0;
    for (double s = 0.05; s < 1.5; s += 0.05) {
        const auto t = inverse_local_time(clock, s);
        if (t.truncated) break;
        EXPECT_GE(t.time, prev);
        prev = t.time;
    }
}

TEST(OccupationRecord, AgreesWithFullPathClock) {
    const auto cfg = small_config();
    const double eps = cfg.default_epsilon();
    const double c = 0.35;
    ClockEnsemble ens(cfg, 8, eps, occupation_target_for(1.0, c, eps), 1);
    for (std::size_t p = 0; p < 8; ++p) {
        const auto clock = occupation_local_time(simulate_ou(cfg, p), eps, c);
        for (double s : {0.1, 0.5, 1.0}) {
            const auto a = inverse_local_time(clock, s);
            const auto b = ens.tau(p, s, c);
            EXPECT_EQ(a.truncated, b.truncated);
            EXPECT_NEAR(a.time, b.time, 1e-9);
        }
    }
    EXPECT_THROW(ens.tau(0, 10.0, c), std::domain_error);
}

TEST(FirstHittingTime, ZeroStartAndSkeleton) {
    OUConfig c = small_config();
    EXPECT_EQ(first_hitting_time(c).time, 0.0);
    c.r0 = 1.0;
    c.noise_scale = 0.0;
    EXPECT_TRUE(first_hitting_time(c).truncated);
    c.noise_scale = 1.0;
    const auto t = first_hitting_time(c, 4);
    EXPECT_FALSE(t.truncated);
    EXPECT_GT(t.time, 0.0);
}

TEST(LaplaceTau, ZeroLevelIsOne) {
    const auto e = mc_laplace_tau(1.0, 1.0, 0.0, small_config(), 10, 0.35);
    EXPECT_EQ(e.estimate.mean, 1.0);
    EXPECT_THROW(mc_laplace_tau(1.0, 0.0, 1.0, small_config(), 10, 0.35), std::domain_error);
}

TEST(ClockEnsemble, WorkerCountDoesNotChangeResults) {
    const auto cfg = small_config();
    const double eps = cfg.default_epsilon();
    ClockEnsemble a(cfg, 300, eps, occupation_target_for(1.0, 0.3, eps), 1);
    ClockEnsemble b(cfg, 300, eps, occupation_target_for(1.0, 0.3, eps), 4);
    const auto ea = a.laplace(1.0, 1.0, 0.35);
    const auto eb = b.laplace(1.0, 1.0, 0.35);
    EXPECT_EQ(ea.estimate.mean, eb.estimate.mean);
    EXPECT_EQ(ea.estimate.std_error, eb.estimate.std_error);
}

TEST(ClockEnsemble, LaplaceMonotoneInLambdaAndLevel) {
    const auto cfg = small_config();
    const double eps = cfg.default_epsilon();
    ClockEnsemble ens(cfg, 200, eps, occupation_target_for(1.0, 0.3, eps), 1);
    EXPECT_GT(ens.laplace(0.5, 0.5, 0.35).estimate.mean, ens.laplace(2.0, 0.5, 0.35).estimate.mean);
    EXPECT_GT(ens.laplace(1.0, 0.25, 0.35).estimate.mean, ens.laplace(1.0, 1.0, 0.35).estimate.mean);
}

TEST(Calibration, RecoversTargetOnStoredEnsemble) {
    auto cfg = small_config();
    cfg.t_max = 30.0;
    const double eps = cfg.default_epsilon();
    ClockEnsemble ens(cfg, 1500, eps, occupation_target_for(1.0, 0.125, eps), 1);
    const auto cal = calibrate_on(ens, 1.0);
    EXPECT_NEAR(cal.at_target.estimate.mean, std::exp(-psi_laplace(1.0, 1.0)), 1e-4);
    // Reference value of the normalization at alpha = 1 is about 1/(2 sqrt 2).
    EXPECT_NEAR(cal.normalization, 1.0 / (2.0 * std::sqrt(2.0)), 0.03);
    CalibrationSpec narrow;
    narrow.lower = 1.0;
    narrow.upper = 2.0;
    EXPECT_THROW(calibrate_on(ens, 1.0, narrow), numeric_error);
}

TEST(HittingLaplace, SmallSampleNearTransform) {
    auto cfg = small_config();
    const auto e = mc_laplace_hitting(1.0, 1.0, 1.0, cfg, 2000, 1);
    EXPECT_NEAR(e.estimate.mean, e.target, laplace_band(e, 1.0, cfg.dt));
    EXPECT_NEAR(e.target, j_hitting(1.0, 1.0, 1.0), 0.0);
}
