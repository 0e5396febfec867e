// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stoclock Authors

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace stoclock {

/// Runs body(i) for i in [0, n) on `workers` threads and returns results in index order.
template <class Result, class Body>
std::vector<Result> map_paths(std::size_t n, unsigned workers, const Body& body) {
    std::vector<Result> out(n);
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(n, 1)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) out[i] = body(i);
        return out;
    }
    std::vector<std::exception_ptr> failures(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                const std::size_t lo = w * chunk;
                const std::size_t hi = std::min(n, lo + chunk);
                for (std::size_t i = lo; i < hi; ++i) out[i] = body(i);
            } catch (...) {
                failures[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& f : failures)
        if (f) std::rethrow_exception(f);
    return out;
}

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t n_paths = 0;
};

/// Sample mean and std-error, accumulated in index order.
inline McEstimate summarize(const std::vector<double>& samples) {
    McEstimate est;
    est.n_paths = samples.size();
    if (samples.empty()) return est;
    double sum = 0.0;
    for (double v : samples) sum += v;
    const double mean = sum / static_cast<double>(samples.size());
    double ss = 0.0;
    for (double v : samples) ss += (v - mean) * (v - mean);
    est.mean = mean;
    if (samples.size() > 1) {
        const double var = ss / static_cast<double>(samples.size() - 1);
        est.std_error = std::sqrt(var / static_cast<double>(samples.size()));
    }
    return est;
}

}  // namespace stoclock
