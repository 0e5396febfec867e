// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stoclock Authors

#include <gtest/gtest.h>

#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <vector>

#include "stoclock/utility.hpp"

using namespace stoclock;

namespace {

std::vector<UtilityField> fields() {
    return {UtilityField::log_utility(0.0), UtilityField::log_utility(0.3), UtilityField::power_utility(0.5, 0.2),
            UtilityField::power_utility(-1.0, 0.0), UtilityField::power_utility(-3.0, 0.7)};
}

// sup_x [U(t, x) - x y] by Brent on log x.
double conjugate_oracle(const UtilityField& f, double t, double y) {
    auto neg = [&](double lx) { return -(u_eval(f, t, std::exp(lx)) - std::exp(lx) * y); };
    std::uintmax_t it = 500;
    const double guess = std::log(inverse_marginal(f, t, y));
    return -boost::math::tools::brent_find_minima(neg, guess - 5.0, guess + 5.0, 60, it).second;
}

}  // namespace

TEST(Utility, Validation) {
    EXPECT_THROW(UtilityField::power_utility(1.0).validate(), std::domain_error);
    EXPECT_THROW(UtilityField::power_utility(0.0).validate(), std::domain_error);
    EXPECT_THROW(UtilityField::log_utility(-0.1).validate(), std::domain_error);
    EXPECT_THROW(u_eval(UtilityField::log_utility(), 0.0, 0.0), std::domain_error);
    EXPECT_THROW(inverse_marginal(UtilityField::log_utility(), 0.0, -1.0), std::domain_error);
}

TEST(Utility, PowerTendsToLogAsGammaVanishes) {
    const auto f = UtilityField::power_utility(1e-7, 0.0);
    for (double x : {0.3, 1.0, 4.0}) EXPECT_NEAR(u_eval(f, 0.0, x), std::log(x), 1e-6);
}

TEST(Utility, MarginalMatchesFiniteDifference) {
    for (const auto& f : fields())
        for (double t : {0.0, 1.0})
            for (double x : {0.2, 1.0, 5.0}) {
                const double h = 1e-6 * x;
                const double fd = (u_eval(f, t, x + h) - u_eval(f, t, x - h)) / (2.0 * h);
                EXPECT_NEAR(u_marginal(f, t, x), fd, 1e-6 * std::abs(fd));
            }
}

TEST(Utility, InverseMarginalInvertsMarginal) {
    for (const auto& f : fields())
        for (double t : {0.0, 2.0})
            for (double x : {0.01, 0.5, 3.0, 100.0}) EXPECT_NEAR(inverse_marginal(f, t, u_marginal(f, t, x)), x, 1e-12 * x);
}

TEST(Utility, ConjugateMatchesNumericalSupremum) {
    for (const auto& f : fields())
        for (double t : {0.0, 1.5})
            for (double y : {0.05, 0.7, 3.0}) EXPECT_NEAR(conjugate_v(f, t, y), conjugate_oracle(f, t, y), 1e-8);
}

TEST(Utility, ConjugateSlopeIsMinusInverseMarginal) {
    for (const auto& f : fields())
        for (double y : {0.1, 1.0, 4.0}) {
            const double h = 1e-6 * y;
            const double fd = (conjugate_v(f, 0.5, y + h) - conjugate_v(f, 0.5, y - h)) / (2.0 * h);
            EXPECT_NEAR(conjugate_v_slope(f, 0.5, y), fd, 1e-6 * std::abs(fd));
        }
}

TEST(Utility, FenchelInequality) {
    for (const auto& f : fields())
        for (double x : {0.1, 1.0, 7.0})
            for (double y : {0.1, 1.0, 7.0}) EXPECT_GE(conjugate_v(f, 0.3, y) + x * y - u_eval(f, 0.3, x), -1e-12);
}

TEST(Utility, AsymptoticElasticityBelowOne) {
    std::vector<double> grid;
    for (double x = 1e6; x <= 1e12; x *= 10.0) grid.push_back(x);
    EXPECT_LT(asymptotic_elasticity(UtilityField::log_utility(), grid), 0.1);
    EXPECT_NEAR(asymptotic_elasticity(UtilityField::power_utility(0.5), grid), 0.5, 1e-2);
    EXPECT_LT(asymptotic_elasticity(UtilityField::power_utility(-2.0), grid), 1e-9);
    EXPECT_THROW(asymptotic_elasticity(UtilityField::log_utility(), {}), std::domain_error);
}

TEST(Utility, HaraScalingBound) {
    for (const auto& f : fields())
        for (double delta : {0.1, 0.5, 0.9}) {
            const auto [a, b] = hara_scaling_constants(f, delta);
            for (double x : {0.01, 0.5, 2.0, 50.0})
                {
                    const double lhs = u_eval(f, 0.0, delta * x);
                    EXPECT_GE(lhs + 1e-12 * (1.0 + std::abs(lhs)), a + b * u_eval(f, 0.0, x));
                }
        }
    EXPECT_THROW(hara_scaling_constants(UtilityField::log_utility(), 1.0), std::domain_error);
}
