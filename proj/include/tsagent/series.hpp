#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tsagent/error.hpp"

namespace tsagent {

/// Half-open index range [left, right) into a series.
struct Window {
    std::size_t left = 0;
    std::size_t right = 0;

    std::size_t length() const noexcept { return right - left; }
    friend bool operator==(const Window&, const Window&) = default;
};

/// Immutable univariate history. Non-finite values mark missing observations.
/// Timestamps are kept as ISO-8601 strings, which order lexicographically.
class Series {
public:
    explicit Series(std::vector<double> values,
                    std::optional<std::vector<std::string>> timestamps = std::nullopt,
                    std::optional<std::string> frequency_label = std::nullopt)
        : values_(std::make_shared<const std::vector<double>>(std::move(values))),
          timestamps_(std::move(timestamps)),
          frequency_label_(std::move(frequency_label)) {
        require(!values_->empty(), ErrorCode::BadParam, "series must hold at least one value");
        if (timestamps_) {
            require(timestamps_->size() == values_->size(), ErrorCode::BadParam,
                    "timestamps and values differ in length");
            for (std::size_t i = 1; i < timestamps_->size(); ++i) {
                require((*timestamps_)[i - 1] < (*timestamps_)[i], ErrorCode::BadParam,
                        "timestamps must be strictly increasing at index " + std::to_string(i));
            }
        }
    }

    std::size_t size() const noexcept { return values_->size(); }
    std::span<const double> values() const noexcept { return *values_; }
    double operator[](std::size_t i) const { return (*values_)[i]; }
    const std::optional<std::vector<std::string>>& timestamps() const noexcept { return timestamps_; }
    const std::optional<std::string>& frequency_label() const noexcept { return frequency_label_; }

    Window full() const noexcept { return {0, size()}; }

private:
    std::shared_ptr<const std::vector<double>> values_;
    std::optional<std::vector<std::string>> timestamps_;
    std::optional<std::string> frequency_label_;
};

inline bool is_missing(double x) noexcept { return !std::isfinite(x); }

inline void check_window(std::size_t length, Window w) {
    if (w.left >= w.right || w.right > length) {
        fail(ErrorCode::OutOfBounds, "window [" + std::to_string(w.left) + ", " +
                                         std::to_string(w.right) + ") invalid for length " +
                                         std::to_string(length));
    }
}

inline std::span<const double> slice(std::span<const double> values, Window w) {
    check_window(values.size(), w);
    return values.subspan(w.left, w.length());
}

inline std::span<const double> slice(const Series& series, Window w) {
    return slice(series.values(), w);
}

inline bool has_missing(std::span<const double> xs) {
    return std::any_of(xs.begin(), xs.end(), is_missing);
}

inline std::vector<double> finite_values(std::span<const double> xs) {
    std::vector<double> out;
    out.reserve(xs.size());
    for (double x : xs)
        if (!is_missing(x)) out.push_back(x);
    return out;
}

struct WindowStats {
    std::size_t n = 0;
    double mean = 0.0;
    double variance = 0.0;  // population
    double min = 0.0;
    double max = 0.0;

    double stddev() const { return std::sqrt(variance); }
};

/// Statistics over the finite values of xs; corrected two-pass variance.
inline WindowStats finite_stats(std::span<const double> xs) {
    WindowStats s;
    double sum = 0.0;
    for (double x : xs) {
        if (is_missing(x)) continue;
        if (s.n == 0) {
            s.min = s.max = x;
        } else {
            s.min = std::min(s.min, x);
            s.max = std::max(s.max, x);
        }
        sum += x;
        ++s.n;
    }
    require(s.n > 0, ErrorCode::AllMissing, "window holds no finite value");
    const double n = static_cast<double>(s.n);
    s.mean = sum / n;
    double sq = 0.0, comp = 0.0;
    for (double x : xs) {
        if (is_missing(x)) continue;
        const double d = x - s.mean;
        sq += d * d;
        comp += d;
    }
    s.variance = std::max(0.0, (sq - comp * comp / n) / n);
    if (s.min == s.max) s.variance = 0.0;
    return s;
}

inline WindowStats finite_stats(const Series& series, Window w) {
    return finite_stats(slice(series, w));
}

inline constexpr double kScaleFloor = 1e-8;

/// Instance normalization statistics: y -> (y - loc) / scale.
struct NormStats {
    double loc = 0.0;
    double scale = 1.0;

    static NormStats from_history(std::span<const double> history) {
        const WindowStats s = finite_stats(history);
        return {s.mean, std::max(s.stddev(), kScaleFloor)};
    }
};

inline std::vector<double> normalize(std::span<const double> ys, NormStats stats) {
    require(stats.scale >= kScaleFloor, ErrorCode::BadParam, "scale below floor");
    std::vector<double> out(ys.size());
    std::transform(ys.begin(), ys.end(), out.begin(),
                   [&](double y) { return (y - stats.loc) / stats.scale; });
    return out;
}

inline std::vector<double> denormalize(std::span<const double> ys, NormStats stats) {
    require(stats.scale >= kScaleFloor, ErrorCode::BadParam, "scale below floor");
    std::vector<double> out(ys.size());
    std::transform(ys.begin(), ys.end(), out.begin(),
                   [&](double y) { return y * stats.scale + stats.loc; });
    return out;
}

}  // namespace tsagent
