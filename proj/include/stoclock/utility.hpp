// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stoclock Authors

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace stoclock {

enum class UtilityKind { log, power };

/// Discounted HARA utility field U(t, x) = exp(-beta t) U_gamma(x).
struct UtilityField {
    UtilityKind kind = UtilityKind::log;
    double gamma = 0.5;  // power only
    double beta = 0.0;

    static UtilityField log_utility(double beta = 0.0) { return {UtilityKind::log, 0.0, beta}; }
    static UtilityField power_utility(double gamma, double beta = 0.0) { return {UtilityKind::power, gamma, beta}; }

    void validate() const {
        if (!(beta >= 0.0)) throw std::domain_error("UtilityField: beta must be nonnegative");
        if (kind == UtilityKind::power && !(gamma < 1.0 && gamma != 0.0))
            throw std::domain_error("UtilityField: power utility needs gamma < 1 and gamma != 0");
    }

    double discount(double t) const { return std::exp(-beta * t); }
};

inline double u_eval(const UtilityField& f, double t, double x) {
    if (!(x > 0.0)) throw std::domain_error("u_eval: x must be positive");
    if (f.kind == UtilityKind::log) return f.discount(t) * std::log(x);
    return f.discount(t) * std::expm1(f.gamma * std::log(x)) / f.gamma;
}

/// U_x(t, x).
inline double u_marginal(const UtilityField& f, double t, double x) {
    if (!(x > 0.0)) throw std::domain_error("u_marginal: x must be positive");
    if (f.kind == UtilityKind::log) return f.discount(t) / x;
    return f.discount(t) * std::pow(x, f.gamma - 1.0);
}

inline double inverse_marginal(const UtilityField& f, double t, double y) {
    if (!(y > 0.0)) throw std::domain_error("inverse_marginal: y must be positive");
    if (f.kind == UtilityKind::log) return f.discount(t) / y;
    return std::pow(std::exp(f.beta * t) * y, 1.0 / (f.gamma - 1.0));
}

/// V(t, y) = sup_x [U(t, x) - x y].
inline double conjugate_v(const UtilityField& f, double t, double y) {
    if (!(y > 0.0)) throw std::domain_error("conjugate_v: y must be positive");
    const double d = f.discount(t);
    if (f.kind == UtilityKind::log) return d * (-f.beta * t - std::log(y) - 1.0);
    const double g = f.gamma;
    return d * ((1.0 - g) / g) * std::pow(std::exp(f.beta * t) * y, g / (g - 1.0)) - d / g;
}

/// -dV/dy = I(t, y).
inline double conjugate_v_slope(const UtilityField& f, double t, double y) { return -inverse_marginal(f, t, y); }

/// Tail supremum of x U_x / U over grid points x >= 1e6 (the whole grid if none qualify).
inline double asymptotic_elasticity(const UtilityField& f, const std::vector<double>& x_grid) {
    if (x_grid.empty()) throw std::domain_error("asymptotic_elasticity: empty grid");
    const double tail_start = std::min(1e6, x_grid.back());
    double sup = -std::numeric_limits<double>::infinity();
    for (double x : x_grid) {
        if (x < tail_start) continue;
        const double u = u_eval(f, 0.0, x);
        if (u == 0.0) continue;
        sup = std::max(sup, x * u_marginal(f, 0.0, x) / u);
    }
    return sup;
}

/// Constants with U(t, delta x) >= A + B U(t, x) for delta in (0, 1).
inline std::pair<double, double> hara_scaling_constants(const UtilityField& f, double delta) {
    if (!(delta > 0.0 && delta < 1.0)) throw std::domain_error("hara_scaling_constants: delta must lie in (0, 1)");
    if (f.kind == UtilityKind::log) return {std::log(delta), 1.0};
    const double b = std::pow(delta, f.gamma);
    return {(b - 1.0) / f.gamma, b};
}

inline std::string to_string(UtilityKind k) { return k == UtilityKind::log ? "log" : "power"; }

}  // namespace stoclock
