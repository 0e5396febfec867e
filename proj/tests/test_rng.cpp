// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stoclock Authors

#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "stoclock/parallel.hpp"
#include "stoclock/rng.hpp"

using namespace stoclock;

// Known-answer vectors published with the Random123 library.
TEST(Philox, KnownAnswerVectors) {
    using A4 = std::array<std::uint32_t, 4>;
    EXPECT_EQ(philox4x32_10({0, 0, 0, 0}, {0, 0}), (A4{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
    EXPECT_EQ(philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}),
              (A4{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
    EXPECT_EQ(philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}),
              (A4{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(PathRng, ReproducibleAndIndependentOfDrawOrder) {
    PathRng a(42, 7), b(42, 7);
    std::vector<double> first;
    for (int i = 0; i < 1000; ++i) first.push_back(a.normal());
    // Interleave another stream; path 7 must not notice.
    PathRng other(42, 8);
    for (int i = 0; i < 1000; ++i) {
        (void)other.uniform();
        EXPECT_EQ(b.normal(), first[static_cast<std::size_t>(i)]);
    }
}

TEST(PathRng, StreamsDiffer) {
    std::set<std::uint32_t> heads;
    for (std::uint64_t p = 0; p < 64; ++p) heads.insert(PathRng(1, p).next_u32());
    for (std::uint64_t s = 2; s < 66; ++s) heads.insert(PathRng(s, 0).next_u32());
    EXPECT_EQ(heads.size(), 128u);
}

TEST(PathRng, UniformOpenIntervalAndMoments) {
    PathRng rng(123, 0);
    const int n = 200000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        ASSERT_GT(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
        sq += u * u;
    }
    const double mean = sum / n;
    EXPECT_NEAR(mean, 0.5, 5.0 * std::sqrt(1.0 / 12.0 / n));
    EXPECT_NEAR(sq / n - mean * mean, 1.0 / 12.0, 2e-3);
}

TEST(PathRng, NormalMoments) {
    PathRng rng(99, 3);
    const int n = 200000;
    double m1 = 0, m2 = 0, m3 = 0, m4 = 0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        m1 += z;
        m2 += z * z;
        m3 += z * z * z;
        m4 += z * z * z * z;
    }
    EXPECT_NEAR(m1 / n, 0.0, 5.0 / std::sqrt(n));
    EXPECT_NEAR(m2 / n, 1.0, 5.0 * std::sqrt(2.0 / n));
    EXPECT_NEAR(m3 / n, 0.0, 5.0 * std::sqrt(15.0 / n));
    EXPECT_NEAR(m4 / n, 3.0, 5.0 * std::sqrt(96.0 / n));
}

TEST(MapPaths, ResultsIndependentOfWorkerCount) {
    auto body = [](std::size_t i) {
        PathRng rng(5, i);
        double acc = 0.0;
        for (int k = 0; k < 100; ++k) acc += rng.normal();
        return acc;
    };
    const auto one = map_paths<double>(1001, 1, body);
    const auto four = map_paths<double>(1001, 4, body);
    const auto seven = map_paths<double>(1001, 7, body);
    EXPECT_EQ(one, four);
    EXPECT_EQ(one, seven);
    const auto s1 = summarize(one);
    const auto s4 = summarize(four);
    EXPECT_EQ(s1.mean, s4.mean);
    EXPECT_EQ(s1.std_error, s4.std_error);
}

TEST(MapPaths, PropagatesExceptions) {
    auto body = [](std::size_t i) -> int {
        if (i == 17) throw std::runtime_error("boom");
        return static_cast<int>(i);
    };
    EXPECT_THROW(map_paths<int>(40, 3, body), std::runtime_error);
    EXPECT_THROW(map_paths<int>(40, 1, body), std::runtime_error);
}

TEST(Summarize, MatchesHandComputation) {
    const auto e = summarize({1.0, 2.0, 3.0, 4.0});
    EXPECT_DOUBLE_EQ(e.mean, 2.5);
    EXPECT_NEAR(e.std_error, std::sqrt((2.25 * 2 + 0.25 * 2) / 3.0 / 4.0), 1e-15);
    EXPECT_EQ(e.n_paths, 4u);
    EXPECT_EQ(summarize({}).n_paths, 0u);
}
