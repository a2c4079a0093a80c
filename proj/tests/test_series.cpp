#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "tsagent/series.hpp"

using namespace tsagent;

namespace {

double nan() { return std::nan(""); }

// Plain two-pass reference over finite values.
WindowStats naive_stats(const std::vector<double>& xs) {
    double sum = 0.0;
    std::size_t n = 0;
    for (double x : xs)
        if (std::isfinite(x)) {
            sum += x;
            ++n;
        }
    WindowStats s;
    s.n = n;
    s.mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (double x : xs)
        if (std::isfinite(x)) sq += (x - s.mean) * (x - s.mean);
    s.variance = sq / static_cast<double>(n);
    return s;
}

}  // namespace

TEST(Series, RejectsEmptyAndUnorderedTimestamps) {
    EXPECT_THROW(Series({}), Error);
    EXPECT_THROW(Series({1.0, 2.0}, std::vector<std::string>{"2020-01-02", "2020-01-01"}), Error);
    EXPECT_THROW(Series({1.0, 2.0}, std::vector<std::string>{"2020-01-01"}), Error);
    EXPECT_NO_THROW(Series({1.0, 2.0}, std::vector<std::string>{"2020-01-01", "2020-01-02"}, "D"));
}

TEST(Slice, IndexArithmetic) {
    const Series s({1, 2, 3, 4});
    const auto v = slice(s, {1, 3});
    ASSERT_EQ(v.size(), 2u);
    EXPECT_EQ(v[0], 2);
    EXPECT_EQ(v[1], 3);
    EXPECT_EQ(slice(s, s.full()).size(), 4u);
}

TEST(Slice, EmptyOrOverlongWindowIsOutOfBounds) {
    const Series s({1, 2, 3, 4});
    try {
        slice(s, {3, 3});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::OutOfBounds);
    }
    EXPECT_THROW(slice(s, {0, 5}), Error);
}

TEST(FiniteStats, Examples) {
    const auto a = finite_stats(std::vector<double>{1, 2, 3});
    EXPECT_EQ(a.n, 3u);
    EXPECT_DOUBLE_EQ(a.mean, 2.0);
    EXPECT_NEAR(a.variance, 2.0 / 3.0, 1e-15);

    EXPECT_EQ(finite_stats(std::vector<double>{5, 5, 5}).variance, 0.0);

    const auto c = finite_stats(std::vector<double>{1, nan(), 3});
    EXPECT_EQ(c.n, 2u);
    EXPECT_DOUBLE_EQ(c.mean, 2.0);
    EXPECT_DOUBLE_EQ(c.variance, 1.0);
}

TEST(FiniteStats, AllMissing) {
    try {
        finite_stats(std::vector<double>{nan(), nan()});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::AllMissing);
    }
}

TEST(FiniteStats, MatchesTwoPassOracleOnRandomWindows) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g(3.0, 10.0);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> xs(1 + rng() % 60);
        for (auto& x : xs) x = u(rng) < 0.1 ? nan() : g(rng);
        xs[rng() % xs.size()] = g(rng);
        const auto got = finite_stats(xs);
        const auto want = naive_stats(xs);
        EXPECT_EQ(got.n, want.n);
        EXPECT_NEAR(got.mean, want.mean, 1e-12 * std::max(1.0, std::abs(want.mean)));
        EXPECT_NEAR(got.variance, want.variance, 1e-12 * std::max(1.0, want.variance));
    }
}

TEST(Normalize, AffineMapAndFloor) {
    const auto y = normalize(std::vector<double>{0, 2}, {1.0, 1.0});
    EXPECT_DOUBLE_EQ(y[0], -1.0);
    EXPECT_DOUBLE_EQ(y[1], 1.0);

    const auto flat = NormStats::from_history(std::vector<double>{3, 3, 3});
    EXPECT_EQ(flat.scale, kScaleFloor);
    EXPECT_TRUE(std::isfinite(normalize(std::vector<double>{4.0}, flat)[0]));

    const auto st = NormStats::from_history(std::vector<double>{2, 4, 6});
    EXPECT_DOUBLE_EQ(st.loc, 4.0);
    EXPECT_NEAR(st.scale, 1.632993161855452, 1e-12);
    EXPECT_NEAR(normalize(std::vector<double>{6.0}, st)[0], 1.224744871391589, 1e-12);
}

TEST(Normalize, RoundTripProperty) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1e3, 1e3);
    std::uniform_real_distribution<double> sc(kScaleFloor, 1e3);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> ys(8);
        for (auto& y : ys) y = u(rng);
        const NormStats st{u(rng), sc(rng)};
        const auto back = denormalize(normalize(ys, st), st);
        for (std::size_t i = 0; i < ys.size(); ++i)
            EXPECT_NEAR(back[i], ys[i], 1e-12 * std::max(1.0, std::abs(ys[i])) + 1e-12 * std::abs(st.loc));
    }
}
