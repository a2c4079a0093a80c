#pragma once

// Windowed statistical kernels. Each takes the already-sliced window values.
// Missing values follow pairwise-complete semantics: aggregates skip non-finite
// values, difference-based kernels only use adjacent finite pairs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "tsagent/error.hpp"
#include "tsagent/series.hpp"

namespace tsagent::tools {

enum class Aggregation { Mean, Median, Var };
enum class Occurrence { First, Last };
enum class Extremum { Min, Max };
enum class Relation { Above, Below };

struct LinearTrend {
    double slope = 0.0;
    double intercept = 0.0;
    double rvalue = 0.0;
    double pvalue = 1.0;
    double stderr_ = 0.0;
};

namespace detail {

inline double mean_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double population_var(std::span<const double> v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size());
}

inline double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double aggregate(std::span<const double> v, Aggregation agg) {
    switch (agg) {
        case Aggregation::Mean: return mean_of(v);
        case Aggregation::Median: return median_of({v.begin(), v.end()});
        case Aggregation::Var: return population_var(v);
    }
    return 0.0;
}

// Differences x[i+1] - x[i] over adjacent pairs where both ends are finite.
inline std::vector<double> adjacent_diffs(std::span<const double> xs) {
    std::vector<double> d;
    for (std::size_t i = 0; i + 1 < xs.size(); ++i)
        if (!is_missing(xs[i]) && !is_missing(xs[i + 1])) d.push_back(xs[i + 1] - xs[i]);
    return d;
}

// Linear interpolation between closest ranks on sorted data.
inline double sorted_quantile(std::span<const double> sorted, double q) {
    const double h = static_cast<double>(sorted.size() - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

inline void check_unit_interval(double q, const char* name) {
    require(std::isfinite(q) && q >= 0.0 && q <= 1.0, ErrorCode::BadParam,
            std::string(name) + " must lie in [0, 1]");
}

}  // namespace detail

/// OLS of the finite values against their 0-based rank among finite points.
/// Mirrors scipy.stats.linregress, including its n == 2 and flat-target cases.
inline LinearTrend linear_trend(std::span<const double> xs) {
    const std::vector<double> y = finite_values(xs);
    const std::size_t n = y.size();
    require(n >= 2, ErrorCode::WindowTooShort, "linear_trend needs at least 2 finite points");

    const double nd = static_cast<double>(n);
    const double xmean = (nd - 1.0) / 2.0;
    const double ymean = detail::mean_of(y);
    double ssxm = 0.0, ssym = 0.0, ssxym = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = static_cast<double>(i) - xmean;
        const double dy = y[i] - ymean;
        ssxm += dx * dx;
        ssym += dy * dy;
        ssxym += dx * dy;
    }
    ssxm /= nd;
    ssym /= nd;
    ssxym /= nd;

    LinearTrend out;
    if (ssxm == 0.0 || ssym == 0.0) {
        out.rvalue = 0.0;
    } else {
        out.rvalue = std::clamp(ssxym / std::sqrt(ssxm * ssym), -1.0, 1.0);
    }
    out.slope = ssxym / ssxm;
    out.intercept = ymean - out.slope * xmean;

    if (n == 2) {
        out.pvalue = y[0] == y[1] ? 1.0 : 0.0;
        out.stderr_ = 0.0;
        return out;
    }
    const double df = nd - 2.0;
    constexpr double tiny = 1.0e-20;
    const double r = out.rvalue;
    const double t = r * std::sqrt(df / ((1.0 - r + tiny) * (1.0 + r + tiny)));
    const boost::math::students_t dist(df);
    out.pvalue = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
    out.stderr_ = std::sqrt(std::max(0.0, (1.0 - r * r) * ssym / ssxm / df));
    return out;
}

inline double standard_deviation(std::span<const double> xs) {
    return finite_stats(xs).stddev();
}

inline double absolute_sum_of_changes(std::span<const double> xs) {
    const auto d = detail::adjacent_diffs(xs);
    require(!d.empty(), ErrorCode::WindowTooShort, "needs at least one adjacent finite pair");
    double s = 0.0;
    for (double v : d) s += std::abs(v);
    return s;
}

inline double mean_abs_change(std::span<const double> xs) {
    const auto d = detail::adjacent_diffs(xs);
    require(!d.empty(), ErrorCode::WindowTooShort, "needs at least one adjacent finite pair");
    double s = 0.0;
    for (double v : d) s += std::abs(v);
    return s / static_cast<double>(d.size());
}

inline double ratio_beyond_r_sigma(std::span<const double> xs, double r) {
    require(std::isfinite(r) && r >= 0.0, ErrorCode::BadParam, "r must be >= 0");
    const WindowStats s = finite_stats(xs);
    const double bound = r * s.stddev();
    std::size_t beyond = 0;
    for (double x : xs)
        if (!is_missing(x) && std::abs(x - s.mean) > bound) ++beyond;
    return static_cast<double>(beyond) / static_cast<double>(s.n);
}

inline double quantile(std::span<const double> xs, double q) {
    detail::check_unit_interval(q, "q");
    std::vector<double> v = finite_values(xs);
    require(!v.empty(), ErrorCode::AllMissing, "window holds no finite value");
    std::sort(v.begin(), v.end());
    return detail::sorted_quantile(v, q);
}

/// Aggregate of consecutive changes whose endpoints both lie in the
/// [quantile(q_low), quantile(q_high)] corridor; 0 when no pair qualifies.
inline double change_quantiles(std::span<const double> xs, double q_low, double q_high,
                               bool is_abs, Aggregation agg) {
    detail::check_unit_interval(q_low, "q_l");
    detail::check_unit_interval(q_high, "q_h");
    require(q_low < q_high, ErrorCode::BadParam, "q_l must be smaller than q_h");
    require(agg != Aggregation::Median, ErrorCode::BadParam, "agg must be mean or var");
    std::vector<double> v = finite_values(xs);
    require(!v.empty(), ErrorCode::AllMissing, "window holds no finite value");
    std::sort(v.begin(), v.end());
    const double lo = detail::sorted_quantile(v, q_low);
    const double hi = detail::sorted_quantile(v, q_high);
    auto inside = [&](double x) { return !is_missing(x) && x >= lo && x <= hi; };

    std::vector<double> kept;
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
        if (inside(xs[i]) && inside(xs[i + 1])) {
            const double d = xs[i + 1] - xs[i];
            kept.push_back(is_abs ? std::abs(d) : d);
        }
    }
    if (kept.empty()) return 0.0;
    return detail::aggregate(kept, agg);
}

namespace detail {

// Lag-l estimator 1/((n-l) sigma^2) sum (x_t - mu)(x_{t+l} - mu), with n-l
// replaced by the count of complete pairs. Returns false if no pair exists.
inline bool lag_autocorrelation(std::span<const double> xs, const WindowStats& s, std::size_t lag,
                                double& out) {
    double acc = 0.0;
    std::size_t pairs = 0;
    for (std::size_t t = 0; t + lag < xs.size(); ++t) {
        const double a = xs[t], b = xs[t + lag];
        if (is_missing(a) || is_missing(b)) continue;
        acc += (a - s.mean) * (b - s.mean);
        ++pairs;
    }
    if (pairs == 0) return false;
    out = acc / (static_cast<double>(pairs) * s.variance);
    return true;
}

}  // namespace detail

inline double autocorrelation(std::span<const double> xs, long long lag) {
    require(lag >= 0, ErrorCode::BadParam, "lag must be >= 0");
    require(static_cast<std::size_t>(lag) < xs.size(), ErrorCode::BadParam,
            "lag must be smaller than the window length");
    const WindowStats s = finite_stats(xs);
    require(s.variance > 0.0, ErrorCode::ZeroVariance, "window has zero variance");
    double r = 0.0;
    require(detail::lag_autocorrelation(xs, s, static_cast<std::size_t>(lag), r),
            ErrorCode::WindowTooShort, "no complete pair at this lag");
    return r;
}

/// agg(R(1..m)) with m = min(maxlag, n - 1).
inline double agg_autocorrelation(std::span<const double> xs, long long maxlag, Aggregation agg) {
    require(maxlag >= 1, ErrorCode::BadParam, "maxlag must be >= 1");
    require(xs.size() >= 2, ErrorCode::WindowTooShort, "needs at least 2 points");
    const WindowStats s = finite_stats(xs);
    require(s.variance > 0.0, ErrorCode::ZeroVariance, "window has zero variance");
    const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(maxlag), xs.size() - 1);
    std::vector<double> r;
    for (std::size_t lag = 1; lag <= m; ++lag) {
        double v = 0.0;
        if (detail::lag_autocorrelation(xs, s, lag, v)) r.push_back(v);
    }
    require(!r.empty(), ErrorCode::WindowTooShort, "no complete pair at any lag");
    return detail::aggregate(r, agg);
}

/// Count of indices strictly greater than their `support` neighbours on both sides.
inline double number_peaks(std::span<const double> xs, long long support) {
    require(support >= 1, ErrorCode::BadParam, "n must be >= 1");
    const auto n = static_cast<std::size_t>(support);
    require(xs.size() >= 2 * n + 1, ErrorCode::WindowTooShort, "window shorter than 2n+1");
    std::size_t peaks = 0;
    for (std::size_t i = n; i + n < xs.size(); ++i) {
        bool peak = !is_missing(xs[i]);
        for (std::size_t k = 1; peak && k <= n; ++k)
            peak = xs[i] > xs[i - k] && xs[i] > xs[i + k];
        if (peak) ++peaks;
    }
    return static_cast<double>(peaks);
}

/// Relative location of the first/last min/max. "first" reports index/len,
/// "last" reports (index + 1)/len.
inline double extreme_location(std::span<const double> xs, Occurrence which, Extremum kind) {
    std::size_t best = xs.size();
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (is_missing(xs[i])) continue;
        if (best == xs.size()) {
            best = i;
            continue;
        }
        const bool better = kind == Extremum::Min ? xs[i] < xs[best] : xs[i] > xs[best];
        const bool tie = xs[i] == xs[best];
        if (better || (tie && which == Occurrence::Last)) best = i;
    }
    require(best != xs.size(), ErrorCode::AllMissing, "window holds no finite value");
    const double len = static_cast<double>(xs.size());
    return which == Occurrence::First ? static_cast<double>(best) / len
                                      : static_cast<double>(best + 1) / len;
}

inline double longest_strike(std::span<const double> xs, Relation relation) {
    const double mu = finite_stats(xs).mean;
    std::size_t best = 0, run = 0;
    for (double x : xs) {
        const bool hit = relation == Relation::Above ? x > mu : x < mu;
        run = hit ? run + 1 : 0;
        best = std::max(best, run);
    }
    return static_cast<double>(best);
}

inline double mean_n_absolute_max(std::span<const double> xs, long long n) {
    require(n >= 1, ErrorCode::BadParam, "n must be >= 1");
    std::vector<double> a;
    for (double x : xs)
        if (!is_missing(x)) a.push_back(std::abs(x));
    require(static_cast<std::size_t>(n) <= a.size(), ErrorCode::BadParam,
            "n exceeds the number of finite values");
    std::partial_sort(a.begin(), a.begin() + n, a.end(), std::greater<>());
    double s = 0.0;
    for (long long i = 0; i < n; ++i) s += a[static_cast<std::size_t>(i)];
    return s / static_cast<double>(n);
}

/// sqrt(sum of squared consecutive differences), optionally after z-normalization.
inline double cid_ce(std::span<const double> xs, bool normalize) {
    require(xs.size() >= 2, ErrorCode::WindowTooShort, "cid_ce needs at least 2 points");
    require(!has_missing(xs), ErrorCode::HasMissing, "cid_ce requires a window without gaps");
    std::vector<double> v(xs.begin(), xs.end());
    if (normalize) {
        const WindowStats s = finite_stats(xs);
        if (s.variance == 0.0) return 0.0;
        const double sd = s.stddev();
        for (double& x : v) x = (x - s.mean) / sd;
    }
    double acc = 0.0;
    for (std::size_t i = 1; i < v.size(); ++i) acc += (v[i] - v[i - 1]) * (v[i] - v[i - 1]);
    return std::sqrt(acc);
}

}  // namespace tsagent::tools
