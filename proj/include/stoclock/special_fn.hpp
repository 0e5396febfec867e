// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stoclock Authors

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace stoclock {

class numeric_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct QuadratureSpec {
    double relative_tolerance = 1e-13;
    int max_subdivisions = 512;

    void validate() const {
        if (!(relative_tolerance > 0.0 && relative_tolerance <= 1e-6))
            throw std::domain_error("QuadratureSpec: relative-tolerance must lie in (0, 1e-6]");
        if (max_subdivisions < 64)
            throw std::domain_error("QuadratureSpec: max-subdivisions must be >= 64");
    }
};

namespace detail {

struct Panel {
    double lo;
    double hi;
    double value;
    double error;
    bool operator<(const Panel& other) const { return error < other.error; }
};

// Kronrod 21-point value with |Kronrod - Gauss 10| as the error estimate.
template <class F>
Panel gk21_panel(const F& f, double lo, double hi) {
    namespace bq = boost::math::quadrature;
    const double kronrod = bq::gauss_kronrod<double, 21>::integrate(f, lo, hi, 0, 0.0);
    const double gauss = bq::gauss<double, 10>::integrate(f, lo, hi);
    return {lo, hi, kronrod, std::abs(kronrod - gauss)};
}

struct AdaptiveResult {
    double value;
    double error;
    int panels;
    bool converged;
};

// Global adaptive Gauss-Kronrod: always bisect the panel with the largest error.
template <class F>
AdaptiveResult adaptive_gk(const F& f, double lo, double hi, double rel_tol, int max_panels) {
    std::priority_queue<Panel> heap;
    Panel first = gk21_panel(f, lo, hi);
    double total = first.value;
    double total_err = first.error;
    heap.push(first);
    int panels = 1;
    while (total_err > rel_tol * std::abs(total) && total_err > 1e-300) {
        if (panels >= max_panels) return {total, total_err, panels, false};
        Panel worst = heap.top();
        heap.pop();
        double mid = 0.5 * (worst.lo + worst.hi);
        if (!(mid > worst.lo && mid < worst.hi)) return {total, total_err, panels, false};
        Panel left = gk21_panel(f, worst.lo, mid);
        Panel right = gk21_panel(f, mid, worst.hi);
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        ++panels;
    }
    // Recompute the sum from the panels to shed accumulated rounding.
    double sum = 0.0;
    double err = 0.0;
    std::vector<Panel> all;
    all.reserve(heap.size());
    while (!heap.empty()) {
        all.push_back(heap.top());
        heap.pop();
    }
    std::sort(all.begin(), all.end(), [](const Panel& a, const Panel& b) { return a.lo < b.lo; });
    for (const auto& p : all) {
        sum += p.value;
        err += p.error;
    }
    return {sum, err, panels, true};
}

inline constexpr std::array<double, 9> lanczos_coefficients = {
    0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
    771.32342877765313,   -176.61502916214059,   12.507343278686905,
    -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};

inline double lanczos_gamma(double x) {
    if (x < 0.5) return std::numbers::pi / (std::sin(std::numbers::pi * x) * lanczos_gamma(1.0 - x));
    x -= 1.0;
    double a = lanczos_coefficients[0];
    const double t = x + 7.5;
    for (int i = 1; i < 9; ++i) a += lanczos_coefficients[i] / (x + i);
    return std::sqrt(2.0 * std::numbers::pi) * std::pow(t, x + 0.5) * std::exp(-t) * a;
}

}  // namespace detail

inline double gamma(double x) {
    if (!(x > 0.0)) throw std::domain_error("gamma: argument must be positive");
    // Exact on small integers so factorial anchors carry no approximation error.
    if (x == std::floor(x) && x <= 20.0) {
        double f = 1.0;
        for (int k = 2; k < static_cast<int>(x); ++k) f *= k;
        return f;
    }
    return detail::lanczos_gamma(x);
}

/// H_xi(x) for xi < 0 via its integral representation.
///
/// The integral is split at s = 1. On (0, 1) the power substitution
/// s = u^(2/(-xi)) removes the s^(-xi/2-1) endpoint factor; on (1, inf)
/// the map s = 1 + t/(1-t) brings the exponential tail onto (0, 1).
inline double hermite_h(double xi, double x, const QuadratureSpec& q = {}) {
    if (!(xi < 0.0)) throw std::domain_error("hermite_h: xi must be negative");
    if (!(x >= 0.0)) throw std::domain_error("hermite_h: x must be nonnegative");
    q.validate();
    const double a = -0.5 * xi;
    const double power = 1.0 / a;

    auto head = [&](double u) {
        if (u <= 0.0) return 1.0;
        const double s = std::pow(u, power);
        return std::exp(-s - 2.0 * x * std::sqrt(s));
    };
    auto tail = [&](double t) {
        if (t >= 1.0) return 0.0;
        const double s = 1.0 + t / (1.0 - t);
        const double jac = 1.0 / ((1.0 - t) * (1.0 - t));
        return std::exp(-s - 2.0 * x * std::sqrt(s) + (a - 1.0) * std::log(s)) * jac;
    };

    const int budget = q.max_subdivisions / 2;
    auto first = detail::adaptive_gk(head, 0.0, 1.0, q.relative_tolerance, budget);
    auto second = detail::adaptive_gk(tail, 0.0, 1.0, q.relative_tolerance, budget);
    if (!first.converged || !second.converged) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "hermite_h: quadrature did not converge for xi=" << xi << " x=" << x
            << " (head error " << first.error << " over " << first.panels << " panels, tail error "
            << second.error << " over " << second.panels << " panels)";
        throw numeric_error(msg.str());
    }
    const double integral = power * first.value + second.value;
    return integral / (2.0 * gamma(-xi));
}

/// d/dx H_xi(x) = 2 xi H_{xi-1}(x).
inline double hermite_dh(double xi, double x, const QuadratureSpec& q = {}) {
    if (!(xi < 0.0)) throw std::domain_error("hermite_dh: xi must be negative");
    return 2.0 * xi * hermite_h(xi - 1.0, x, q);
}

inline double psi_laplace(double lambda, double alpha) {
    if (!(alpha > 0.0)) throw std::domain_error("psi_laplace: alpha must be positive");
    if (!(lambda > 0.0)) throw std::domain_error("psi_laplace: only lambda > 0 is implemented");
    const double ratio = lambda / alpha;
    const double g = gamma(0.5 + 0.5 * ratio);
    return alpha * std::pow(2.0, 1.0 + ratio) * g * g /
           (std::sqrt(2.0 * std::numbers::pi) * gamma(ratio));
}

/// 1 / H_{-lambda/alpha}(0), written through the duplication formula.
inline double hitting_prefactor(double lambda, double alpha) {
    const double ratio = lambda / alpha;
    return std::pow(2.0, ratio) * gamma(0.5 * (1.0 + ratio)) / std::sqrt(std::numbers::pi);
}

/// E[exp(-lambda T0) | R0 = r] for dR = -alpha R dt + dW.
///
/// The argument of H is sqrt(alpha) * r, which solves the generator equation
/// 1/2 f'' - alpha r f' = lambda f for every alpha.
inline double j_hitting(double lambda, double r, double alpha, const QuadratureSpec& q = {}) {
    if (!(lambda > 0.0)) throw std::domain_error("j_hitting: lambda must be positive");
    if (!(alpha > 0.0)) throw std::domain_error("j_hitting: alpha must be positive");
    if (!(r >= 0.0)) throw std::domain_error("j_hitting: r must be nonnegative");
    return hitting_prefactor(lambda, alpha) * hermite_h(-lambda / alpha, std::sqrt(alpha) * r, q);
}

/// Literal form with argument r / sqrt(2); coincides with j_hitting at alpha = 1/2.
inline double j_hitting_printed(double lambda, double r, double alpha, const QuadratureSpec& q = {}) {
    if (!(lambda > 0.0)) throw std::domain_error("j_hitting_printed: lambda must be positive");
    if (!(alpha > 0.0)) throw std::domain_error("j_hitting_printed: alpha must be positive");
    if (!(r >= 0.0)) throw std::domain_error("j_hitting_printed: r must be nonnegative");
    return hitting_prefactor(lambda, alpha) * hermite_h(-lambda / alpha, r / std::sqrt(2.0), q);
}

/// d/dr j_hitting(lambda, r, alpha).
inline double j_hitting_dr(double lambda, double r, double alpha, const QuadratureSpec& q = {}) {
    if (!(r >= 0.0)) throw std::domain_error("j_hitting_dr: r must be nonnegative");
    return hitting_prefactor(lambda, alpha) * std::sqrt(alpha) *
           hermite_dh(-lambda / alpha, std::sqrt(alpha) * r, q);
}

inline double h_feedback(double z, double beta, double alpha, const QuadratureSpec& q = {}) {
    if (!(beta > 0.0) || !(alpha > 0.0)) throw std::domain_error("h_feedback: beta and alpha must be positive");
    if (!(z >= 0.0)) throw std::domain_error("h_feedback: z must be nonnegative");
    const double xi = -beta / alpha;
    return -(2.0 * beta / alpha) * hermite_h(xi - 1.0, z, q) / hermite_h(xi, z, q);
}

/// Hedge exposure sgn(r) d/dr log j(beta, |r|) = sgn(r) sqrt(alpha) h(sqrt(alpha) |r|).
inline double nu_feedback(double r, double beta, double alpha, const QuadratureSpec& q = {}) {
    if (r == 0.0) return 0.0;
    const double sgn = r > 0.0 ? 1.0 : -1.0;
    return sgn * std::sqrt(alpha) * h_feedback(std::sqrt(alpha) * std::abs(r), beta, alpha, q);
}

/// Tabulated |nu| profile on [0, r_max] with cubic Hermite interpolation.
class NuTable {
public:
    NuTable(double beta, double alpha, double step = 2e-3, double r_max = 8.0)
        : step_(step), r_max_(r_max) {
        const auto n = static_cast<std::size_t>(std::ceil(r_max / step)) + 1;
        values_.resize(n);
        slopes_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            values_[i] = std::sqrt(alpha) * h_feedback(std::sqrt(alpha) * step * static_cast<double>(i), beta, alpha);
        }
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t lo = i == 0 ? 0 : i - 1;
            const std::size_t hi = i + 1 == n ? i : i + 1;
            slopes_[i] = (values_[hi] - values_[lo]) / (step * static_cast<double>(hi - lo));
        }
        // Beyond the table h(z) ~ -D / z.
        tail_constant_ = values_.back() * r_max_;
    }

    /// nu at signed r.
    double operator()(double r) const {
        if (r == 0.0) return 0.0;
        const double sgn = r > 0.0 ? 1.0 : -1.0;
        return sgn * magnitude_profile(std::abs(r));
    }

    double bound() const {
        double m = 0.0;
        for (double v : values_) m = std::max(m, std::abs(v));
        return m;
    }

private:
    double magnitude_profile(double ar) const {
        if (ar >= r_max_) return tail_constant_ / ar;
        const double pos = ar / step_;
        auto i = static_cast<std::size_t>(pos);
        if (i + 1 >= values_.size()) i = values_.size() - 2;
        const double t = pos - static_cast<double>(i);
        const double t2 = t * t;
        const double t3 = t2 * t;
        const double h00 = 2 * t3 - 3 * t2 + 1;
        const double h10 = t3 - 2 * t2 + t;
        const double h01 = -2 * t3 + 3 * t2;
        const double h11 = t3 - t2;
        return h00 * values_[i] + h10 * step_ * slopes_[i] + h01 * values_[i + 1] + h11 * step_ * slopes_[i + 1];
    }

    double step_;
    double r_max_;
    double tail_constant_ = 0.0;
    std::vector<double> values_;
    std::vector<double> slopes_;
};

}  // namespace stoclock
