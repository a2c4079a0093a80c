#pragma once

// Straight-line reference implementations of the toolbox, written for clarity
// rather than speed. They throw tsagent::Error with the same codes as the tools.

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "tsagent/error.hpp"
#include "tsagent/json.hpp"

namespace oracle {

using tsagent::ErrorCode;
using tsagent::Json;
using tsagent::require;
using Payload = std::vector<std::pair<std::string, double>>;

inline bool missing(double x) { return !std::isfinite(x); }

inline std::vector<double> finite(const std::vector<double>& xs) {
    std::vector<double> out;
    for (double x : xs)
        if (!missing(x)) out.push_back(x);
    return out;
}

inline bool any_missing(const std::vector<double>& xs) {
    for (double x : xs)
        if (missing(x)) return true;
    return false;
}

inline double mean(const std::vector<double>& v) {
    long double s = 0;
    for (double x : v) s += x;
    return static_cast<double>(s / v.size());
}

inline double pvar(const std::vector<double>& v) {
    const double m = mean(v);
    long double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return static_cast<double>(s / v.size());
}

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

inline double quantile_of(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double moments_checked_mean(const std::vector<double>& xs) {
    const auto f = finite(xs);
    require(!f.empty(), ErrorCode::AllMissing, "no finite values");
    return mean(f);
}

inline Payload value(double v) { return {{"value", v}}; }

inline Payload linear_trend(const std::vector<double>& xs) {
    const auto y = finite(xs);
    require(y.size() >= 2, ErrorCode::WindowTooShort, "short");
    const double n = static_cast<double>(y.size());
    long double sx = 0, sy = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        sx += i;
        sy += y[i];
    }
    const long double mx = sx / n, my = sy / n;
    long double sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        sxx += (i - mx) * (i - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (i - mx) * (y[i] - my);
    }
    const double slope = static_cast<double>(sxy / sxx);
    const double intercept = static_cast<double>(my - slope * mx);
    double r = syy == 0 ? 0.0 : static_cast<double>(sxy / std::sqrt(sxx * syy));
    r = std::max(-1.0, std::min(1.0, r));
    double p, se;
    if (y.size() == 2) {
        p = y[0] == y[1] ? 1.0 : 0.0;
        se = 0.0;
    } else {
        const double df = n - 2;
        const double t2 = r * r * df / ((1 - r) * (1 + r));
        // two-sided Student t tail via the regularized incomplete beta
        p = std::abs(r) == 1.0 ? 0.0 : boost::math::ibeta(df / 2, 0.5, df / (df + t2));
        se = std::sqrt(std::max(0.0, static_cast<double>((1 - r * r) * syy / sxx / df)));
    }
    return {{"slope", slope}, {"intercept", intercept}, {"rvalue", r}, {"pvalue", p}, {"stderr", se}};
}

inline Payload standard_deviation(const std::vector<double>& xs) {
    const auto f = finite(xs);
    require(!f.empty(), ErrorCode::AllMissing, "no finite values");
    return value(std::sqrt(pvar(f)));
}

inline std::vector<double> changes(const std::vector<double>& xs) {
    std::vector<double> d;
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (!missing(xs[i]) && !missing(xs[i - 1])) d.push_back(xs[i] - xs[i - 1]);
    require(!d.empty(), ErrorCode::WindowTooShort, "no pairs");
    return d;
}

inline Payload absolute_sum_of_changes(const std::vector<double>& xs) {
    double s = 0;
    for (double d : changes(xs)) s += std::fabs(d);
    return value(s);
}

inline Payload mean_abs_change(const std::vector<double>& xs) {
    const auto d = changes(xs);
    double s = 0;
    for (double v : d) s += std::fabs(v);
    return value(s / d.size());
}

inline Payload ratio_beyond_r_sigma(const std::vector<double>& xs, double r) {
    const auto f = finite(xs);
    require(!f.empty(), ErrorCode::AllMissing, "no finite values");
    const double m = mean(f), sd = std::sqrt(pvar(f));
    int count = 0;
    for (double x : f)
        if (std::fabs(x - m) > r * sd) ++count;
    return value(static_cast<double>(count) / f.size());
}

inline Payload quantile(const std::vector<double>& xs, double q) {
    const auto f = finite(xs);
    require(!f.empty(), ErrorCode::AllMissing, "no finite values");
    return value(quantile_of(f, q));
}

inline Payload change_quantiles(const std::vector<double>& xs, double ql, double qh, bool is_abs,
                                const std::string& agg) {
    require(ql < qh, ErrorCode::BadParam, "order");
    const auto f = finite(xs);
    require(!f.empty(), ErrorCode::AllMissing, "no finite values");
    const double lo = quantile_of(f, ql), hi = quantile_of(f, qh);
    std::vector<double> kept;
    for (std::size_t i = 1; i < xs.size(); ++i) {
        const double a = xs[i - 1], b = xs[i];
        if (missing(a) || missing(b)) continue;
        if (a < lo || a > hi || b < lo || b > hi) continue;
        kept.push_back(is_abs ? std::fabs(b - a) : b - a);
    }
    if (kept.empty()) return value(0.0);
    return value(agg == "mean" ? mean(kept) : pvar(kept));
}

// Returns false when no complete pair exists at this lag.
inline bool acf(const std::vector<double>& xs, std::size_t lag, double mu, double var, double& out) {
    long double s = 0;
    int pairs = 0;
    for (std::size_t t = lag; t < xs.size(); ++t) {
        if (missing(xs[t]) || missing(xs[t - lag])) continue;
        s += (xs[t - lag] - mu) * (xs[t] - mu);
        ++pairs;
    }
    if (pairs == 0) return false;
    out = static_cast<double>(s / (pairs * var));
    return true;
}

inline Payload autocorrelation(const std::vector<double>& xs, long long lag) {
    require(lag < static_cast<long long>(xs.size()), ErrorCode::BadParam, "lag");
    const auto f = finite(xs);
    require(!f.empty(), ErrorCode::AllMissing, "no finite values");
    const double var = pvar(f);
    require(var > 0, ErrorCode::ZeroVariance, "flat");
    double r;
    require(acf(xs, static_cast<std::size_t>(lag), mean(f), var, r), ErrorCode::WindowTooShort, "pairs");
    return value(r);
}

inline Payload agg_autocorrelation(const std::vector<double>& xs, long long maxlag, const std::string& agg) {
    require(xs.size() >= 2, ErrorCode::WindowTooShort, "short");
    const auto f = finite(xs);
    require(!f.empty(), ErrorCode::AllMissing, "no finite values");
    const double var = pvar(f);
    require(var > 0, ErrorCode::ZeroVariance, "flat");
    std::vector<double> rs;
    for (long long lag = 1; lag <= maxlag && lag < static_cast<long long>(xs.size()); ++lag) {
        double r;
        if (acf(xs, static_cast<std::size_t>(lag), mean(f), var, r)) rs.push_back(r);
    }
    require(!rs.empty(), ErrorCode::WindowTooShort, "pairs");
    if (agg == "mean") return value(mean(rs));
    if (agg == "median") return value(median(rs));
    return value(pvar(rs));
}

inline Payload number_peaks(const std::vector<double>& xs, long long n) {
    require(static_cast<long long>(xs.size()) >= 2 * n + 1, ErrorCode::WindowTooShort, "short");
    int count = 0;
    for (long long i = n; i + n < static_cast<long long>(xs.size()); ++i) {
        bool ok = !missing(xs[i]);
        for (long long k = 1; k <= n; ++k)
            if (!(xs[i] > xs[i - k]) || !(xs[i] > xs[i + k])) ok = false;
        if (ok) ++count;
    }
    return value(count);
}

inline Payload location(const std::vector<double>& xs, bool first, bool minimum) {
    const auto f = finite(xs);
    require(!f.empty(), ErrorCode::AllMissing, "no finite values");
    const double target = minimum ? *std::min_element(f.begin(), f.end()) : *std::max_element(f.begin(), f.end());
    long long idx = -1;
    for (std::size_t i = 0; i < xs.size(); ++i)
        if (xs[i] == target) {
            idx = static_cast<long long>(i);
            if (first) break;
        }
    const double len = static_cast<double>(xs.size());
    return value(first ? idx / len : (idx + 1) / len);
}

inline Payload longest_strike(const std::vector<double>& xs, bool above) {
    const double m = moments_checked_mean(xs);
    int best = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        int run = 0;
        for (std::size_t j = i; j < xs.size() && (above ? xs[j] > m : xs[j] < m); ++j) ++run;
        best = std::max(best, run);
    }
    return value(best);
}

inline Payload mean_n_absolute_max(const std::vector<double>& xs, long long n) {
    auto f = finite(xs);
    require(n <= static_cast<long long>(f.size()), ErrorCode::BadParam, "n");
    for (double& x : f) x = std::fabs(x);
    std::sort(f.rbegin(), f.rend());
    double s = 0;
    for (long long i = 0; i < n; ++i) s += f[i];
    return value(s / n);
}

// --- frequency domain: direct DFT -------------------------------------------

struct Bin {
    long double re = 0, im = 0;
};

inline Bin dft_bin(const std::vector<double>& xs, std::size_t k) {
    const long double pi = 3.141592653589793238462643383279502884L;
    const std::size_t n = xs.size();
    Bin b;
    for (std::size_t t = 0; t < n; ++t) {
        const std::size_t m = (k * t) % n;  // exact argument reduction
        const long double ang = 2 * pi * m / n;
        b.re += xs[t] * std::cos(ang);
        b.im -= xs[t] * std::sin(ang);
    }
    return b;
}

inline Payload fft_coefficient(const std::vector<double>& xs, const std::vector<long long>& coeffs,
                               const std::string& attr) {
    require(!any_missing(xs), ErrorCode::HasMissing, "gaps");
    Payload out;
    for (long long k : coeffs) {
        require(k <= static_cast<long long>(xs.size() / 2), ErrorCode::BadParam, "k");
        const Bin b = dft_bin(xs, static_cast<std::size_t>(k));
        double v;
        if (attr == "real")
            v = static_cast<double>(b.re);
        else if (attr == "imag")
            v = static_cast<double>(b.im);
        else if (attr == "abs")
            v = static_cast<double>(std::sqrt(b.re * b.re + b.im * b.im));
        else
            v = static_cast<double>(std::atan2(b.im, b.re) * 180 / 3.141592653589793238462643383279502884L);
        out.emplace_back("coeff_" + std::to_string(k), v);
    }
    return out;
}

inline std::vector<double> welch(const std::vector<double>& xs) {
    require(xs.size() >= 8, ErrorCode::WindowTooShort, "short");
    require(!any_missing(xs), ErrorCode::HasMissing, "gaps");
    const std::size_t seg = std::min<std::size_t>(256, xs.size());
    const std::size_t hop = seg - seg / 2;
    const double pi = 3.14159265358979323846;
    std::vector<double> w(seg);
    double norm = 0;
    for (std::size_t i = 0; i < seg; ++i) {
        w[i] = std::pow(std::sin(pi * i / seg), 2);  // periodic Hann
        norm += w[i] * w[i];
    }
    std::vector<double> psd(seg / 2 + 1, 0.0);
    int count = 0;
    for (std::size_t s = 0; s + seg <= xs.size(); s += hop) {
        std::vector<double> part(xs.begin() + s, xs.begin() + s + seg);
        const double m = mean(part);
        for (std::size_t i = 0; i < seg; ++i) part[i] = (part[i] - m) * w[i];
        for (std::size_t k = 0; k < psd.size(); ++k) {
            const Bin b = dft_bin(part, k);
            double p = static_cast<double>(b.re * b.re + b.im * b.im) / norm;
            if (k > 0 && 2 * k != seg) p *= 2;
            psd[k] += p;
        }
        ++count;
    }
    for (double& p : psd) p /= count;
    return psd;
}

inline Payload spkt_welch_density(const std::vector<double>& xs, const std::vector<long long>& coeffs) {
    const auto psd = welch(xs);
    Payload out;
    for (long long k : coeffs) {
        require(k < static_cast<long long>(psd.size()), ErrorCode::BadParam, "k");
        out.emplace_back("coeff_" + std::to_string(k), psd[k]);
    }
    return out;
}

inline Payload fourier_entropy(const std::vector<double>& xs, long long bins) {
    const auto psd = welch(xs);
    const double top = *std::max_element(psd.begin(), psd.end());
    require(top > 0, ErrorCode::ZeroVariance, "flat");
    std::vector<int> hist(bins, 0);
    for (double p : psd) {
        long long b = static_cast<long long>(std::floor(p / top * bins));
        hist[std::min(b, bins - 1)]++;
    }
    double h = 0;
    for (int c : hist)
        if (c > 0) {
            const double pr = static_cast<double>(c) / psd.size();
            h -= pr * std::log(pr);
        }
    return value(h);
}

// --- ADF via normal equations -------------------------------------------------

// Solves (X'X) b = X'y by Gauss-Jordan; returns false when a pivot vanishes.
inline bool ols(const std::vector<std::vector<double>>& X, const std::vector<double>& y, std::vector<double>& beta,
                double& ssr, double& se1) {
    const std::size_t k = X[0].size(), n = X.size();
    std::vector<std::vector<long double>> a(k, std::vector<long double>(2 * k + 1, 0));
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j)
            for (std::size_t r = 0; r < n; ++r) a[i][j] += (long double)X[r][i] * X[r][j];
        for (std::size_t r = 0; r < n; ++r) a[i][2 * k] += (long double)X[r][i] * y[r];
        a[i][k + i] = 1;
    }
    long double maxdiag = 0;
    for (std::size_t i = 0; i < k; ++i) maxdiag = std::max(maxdiag, std::fabs(a[i][i]));
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < k; ++r)
            if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
        if (std::fabs(a[piv][c]) <= 1e-18L * maxdiag) return false;
        std::swap(a[c], a[piv]);
        const long double d = a[c][c];
        for (auto& v : a[c]) v /= d;
        for (std::size_t r = 0; r < k; ++r) {
            if (r == c) continue;
            const long double f = a[r][c];
            for (std::size_t j = 0; j <= 2 * k; ++j) a[r][j] -= f * a[c][j];
        }
    }
    beta.assign(k, 0);
    for (std::size_t i = 0; i < k; ++i) beta[i] = static_cast<double>(a[i][2 * k]);
    long double s = 0;
    for (std::size_t r = 0; r < n; ++r) {
        long double fit = 0;
        for (std::size_t i = 0; i < k; ++i) fit += (long double)X[r][i] * a[i][2 * k];
        s += (y[r] - fit) * (y[r] - fit);
    }
    ssr = static_cast<double>(s);
    se1 = static_cast<double>(std::sqrt(s / (n - k) * a[1][k + 1]));
    return true;
}

inline void adf_rows(const std::vector<double>& x, std::size_t first, std::size_t p,
                     std::vector<std::vector<double>>& X, std::vector<double>& y) {
    X.clear();
    y.clear();
    for (std::size_t t = first + 1; t < x.size(); ++t) {
        std::vector<double> row{1.0, x[t - 1]};
        for (std::size_t j = 1; j <= p; ++j) row.push_back(x[t - j] - x[t - j - 1]);
        X.push_back(row);
        y.push_back(x[t] - x[t - 1]);
    }
}

inline Payload augmented_dickey_fuller(const std::vector<double>& x) {
    require(x.size() >= 20, ErrorCode::WindowTooShort, "short");
    require(!any_missing(x), ErrorCode::HasMissing, "gaps");
    const double n = static_cast<double>(x.size());
    long long pmax = static_cast<long long>(std::floor(12 * std::pow(n / 100, 0.25)));
    pmax = std::max(0LL, std::min(pmax, static_cast<long long>(x.size() / 2) - 2));
    std::vector<std::vector<double>> X;
    std::vector<double> y, beta;
    double best = INFINITY;
    long long best_p = -1;
    for (long long p = 0; p <= pmax; ++p) {
        adf_rows(x, static_cast<std::size_t>(pmax), static_cast<std::size_t>(p), X, y);
        double ssr, se;
        if (!ols(X, y, beta, ssr, se)) break;
        const double m = static_cast<double>(X.size());
        const double aic = m * (std::log(2 * M_PI) + std::log(ssr / m) + 1) + 2 * (p + 2);
        if (aic < best) {
            best = aic;
            best_p = p;
        }
    }
    require(best_p >= 0, ErrorCode::Singular, "singular");
    adf_rows(x, static_cast<std::size_t>(best_p), static_cast<std::size_t>(best_p), X, y);
    double ssr, se;
    require(ols(X, y, beta, ssr, se) && ssr > 0, ErrorCode::Singular, "singular");
    return value(beta[1] / se);
}

inline Payload cid_ce(const std::vector<double>& xs, bool normalize) {
    require(xs.size() >= 2, ErrorCode::WindowTooShort, "short");
    require(!any_missing(xs), ErrorCode::HasMissing, "gaps");
    std::vector<double> v = xs;
    if (normalize) {
        const double m = mean(v), sd = std::sqrt(pvar(v));
        if (sd == 0) return value(0.0);
        for (double& x : v) x = (x - m) / sd;
    }
    long double s = 0;
    for (std::size_t i = 1; i < v.size(); ++i) s += (long double)(v[i] - v[i - 1]) * (v[i] - v[i - 1]);
    return value(static_cast<double>(std::sqrt(s)));
}

// --- CWT peak counting ----------------------------------------------------------

inline double ricker_at(double t, double a) {
    const double amp = 2 / (std::sqrt(3 * a) * std::pow(M_PI, 0.25));
    return amp * (1 - t * t / (a * a)) * std::exp(-t * t / (2 * a * a));
}

inline Payload number_cwt_peaks(const std::vector<double>& xs, long long widths) {
    require(xs.size() >= 3, ErrorCode::WindowTooShort, "short");
    require(!any_missing(xs), ErrorCode::HasMissing, "gaps");
    const long long n = static_cast<long long>(xs.size());
    if (std::all_of(xs.begin(), xs.end(), [&](double v) { return v == xs[0]; })) return value(0);

    // cwt[w-1][i] = sum_j xs[j] * psi_w[j - i + m/2], psi sampled on m points centred at (m-1)/2
    std::vector<std::vector<double>> cwt(widths, std::vector<double>(n, 0.0));
    for (long long w = 1; w <= widths; ++w) {
        const long long m = std::min(10 * w, n);
        for (long long i = 0; i < n; ++i) {
            double acc = 0;
            for (long long j = n - 1; j >= 0; --j) {
                const long long k = j - i + m / 2;
                if (k < 0 || k >= m) continue;
                acc += xs[j] * ricker_at(k - (m - 1) / 2.0, static_cast<double>(w));
            }
            cwt[w - 1][i] = acc;
        }
    }
    auto is_max = [&](long long r, long long i) {
        return i > 0 && i + 1 < n && cwt[r][i] > cwt[r][i - 1] && cwt[r][i] > cwt[r][i + 1];
    };

    struct Line {
        std::vector<long long> r, c;
        int gap;
    };
    long long top = -1;
    for (long long r = widths - 1; r >= 0 && top < 0; --r)
        for (long long i = 0; i < n; ++i)
            if (is_max(r, i)) top = r;
    std::vector<Line> open, closed;
    if (top >= 0) {
        for (long long i = 0; i < n; ++i)
            if (is_max(top, i)) open.push_back({{top}, {i}, 0});
        for (long long r = top - 1; r >= 0; --r) {
            for (auto& l : open) l.gap++;
            std::vector<long long> last;
            for (auto& l : open) last.push_back(l.c.back());
            for (long long i = 0; i < n; ++i) {
                if (!is_max(r, i)) continue;
                long long pick = -1;
                for (std::size_t k = 0; k < last.size(); ++k)
                    if (pick < 0 || std::llabs(i - last[k]) < std::llabs(i - last[pick])) pick = static_cast<long long>(k);
                if (pick >= 0 && std::llabs(i - last[pick]) <= (r + 1) / 4.0) {
                    open[pick].r.push_back(r);
                    open[pick].c.push_back(i);
                    open[pick].gap = 0;
                } else {
                    open.push_back({{r}, {i}, 0});
                }
            }
            for (long long k = static_cast<long long>(open.size()) - 1; k >= 0; --k)
                if (open[k].gap > 2) {
                    closed.push_back(open[k]);
                    open.erase(open.begin() + k);
                }
        }
    }
    for (auto& l : open) closed.push_back(l);

    const long long win = (n + 19) / 20;
    const long long min_len = (widths + 3) / 4;
    int peaks = 0;
    for (const auto& l : closed) {
        if (static_cast<long long>(l.r.size()) < min_len) continue;
        const long long col = l.c.back(), row = l.r.back();
        const long long lo = std::max(0LL, col - win / 2), hi = std::min(n, col + win / 2 + win % 2);
        const double noise = quantile_of(std::vector<double>(cwt[0].begin() + lo, cwt[0].begin() + hi), 0.1);
        const double snr = std::fabs(cwt[row][col] / noise);
        if (!(snr < 1.0)) ++peaks;
    }
    return value(peaks);
}

/// Dispatches by tool name over the already-sliced window.
inline Payload run(const std::string& name, const std::vector<double>& xs, const Json& a) {
    if (name == "linear_trend") return linear_trend(xs);
    if (name == "standard_deviation") return standard_deviation(xs);
    if (name == "mean_abs_change") return mean_abs_change(xs);
    if (name == "absolute_sum_of_changes") return absolute_sum_of_changes(xs);
    if (name == "ratio_beyond_r_sigma") return ratio_beyond_r_sigma(xs, a["r"].get<double>());
    if (name == "change_quantiles")
        return change_quantiles(xs, a["q_l"].get<double>(), a["q_h"].get<double>(), a["is_abs"].get<bool>(),
                                a["agg"].get<std::string>());
    if (name == "quantile") return quantile(xs, a["q"].get<double>());
    if (name == "agg_autocorrelation")
        return agg_autocorrelation(xs, a["maxlag"].get<long long>(), a["agg"].get<std::string>());
    if (name == "autocorrelation") return autocorrelation(xs, a["lag"].get<long long>());
    if (name == "first_location_of_maximum") return location(xs, true, false);
    if (name == "first_location_of_minimum") return location(xs, true, true);
    if (name == "last_location_of_maximum") return location(xs, false, false);
    if (name == "last_location_of_minimum") return location(xs, false, true);
    if (name == "longest_strike_above_mean") return longest_strike(xs, true);
    if (name == "longest_strike_below_mean") return longest_strike(xs, false);
    if (name == "mean_n_absolute_max") return mean_n_absolute_max(xs, a["n"].get<long long>());
    if (name == "number_cwt_peaks") return number_cwt_peaks(xs, a["max_width"].get<long long>());
    if (name == "number_peaks") return number_peaks(xs, a["n"].get<long long>());
    if (name == "fft_coefficient")
        return fft_coefficient(xs, a["coeffs"].get<std::vector<long long>>(), a["attr"].get<std::string>());
    if (name == "fourier_entropy") return fourier_entropy(xs, a["bins"].get<long long>());
    if (name == "spkt_welch_density") return spkt_welch_density(xs, a["coeffs"].get<std::vector<long long>>());
    if (name == "augmented_dickey_fuller") return augmented_dickey_fuller(xs);
    if (name == "cid_ce") return cid_ce(xs, a["normalize"].get<bool>());
    tsagent::fail(ErrorCode::UnknownTool, name);
}

}  // namespace oracle
