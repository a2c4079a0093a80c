#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

#include "tsagent/error.hpp"
#include "tsagent/series.hpp"
#include "tsagent/toolbox/features.hpp"

namespace tsagent::tools {

/// Ridge acceptance rules for number_cwt_peaks.
struct CwtRidgeRules {
    static constexpr double gap_thresh = 2.0;
    static constexpr double min_snr = 1.0;
    static constexpr double noise_percentile = 10.0;
};

namespace cwt {

/// Ricker (Mexican hat) wavelet sampled at `points` positions with width a.
inline std::vector<double> ricker(std::size_t points, double a) {
    const double amp = 2.0 / (std::sqrt(3.0 * a) * std::pow(std::numbers::pi, 0.25));
    const double wsq = a * a;
    std::vector<double> w(points);
    for (std::size_t i = 0; i < points; ++i) {
        const double v = static_cast<double>(i) - (static_cast<double>(points) - 1.0) / 2.0;
        const double xsq = v * v;
        w[i] = amp * (1.0 - xsq / wsq) * std::exp(-xsq / (2.0 * wsq));
    }
    return w;
}

/// Centered ("same") linear convolution of data with kernel, len(kernel) <= len(data).
inline std::vector<double> convolve_same(std::span<const double> data, std::span<const double> kernel) {
    const std::size_t n = data.size(), k = kernel.size();
    const std::size_t offset = (k - 1) / 2;
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t full = i + offset;  // index into the full convolution
        double acc = 0.0;
        const std::size_t jlo = full >= n ? full - n + 1 : 0;
        const std::size_t jhi = std::min(full, k - 1);
        for (std::size_t j = jlo; j <= jhi; ++j) acc += data[full - j] * kernel[j];
        out[i] = acc;
    }
    return out;
}

/// Rows are widths 1..max_width, columns are positions.
inline std::vector<std::vector<double>> transform(std::span<const double> xs, std::size_t max_width) {
    std::vector<std::vector<double>> rows;
    rows.reserve(max_width);
    for (std::size_t width = 1; width <= max_width; ++width) {
        const std::size_t points = std::min(10 * width, xs.size());
        auto kernel = ricker(points, static_cast<double>(width));
        std::reverse(kernel.begin(), kernel.end());
        rows.push_back(convolve_same(xs, kernel));
    }
    return rows;
}

struct Ridge {
    std::vector<std::size_t> rows;
    std::vector<std::size_t> cols;
    int gap = 0;
};

inline std::vector<bool> relative_maxima(std::span<const double> row) {
    const std::size_t n = row.size();
    std::vector<bool> out(n, false);
    for (std::size_t i = 1; i + 1 < n; ++i) out[i] = row[i] > row[i - 1] && row[i] > row[i + 1];
    return out;
}

/// Connects relative maxima from the widest scale downwards into ridge lines.
inline std::vector<Ridge> ridge_lines(const std::vector<std::vector<double>>& cwt,
                                      std::span<const double> max_distances, double gap_thresh) {
    std::vector<std::vector<bool>> maxima;
    maxima.reserve(cwt.size());
    for (const auto& row : cwt) maxima.push_back(relative_maxima(row));

    std::size_t start_row = cwt.size();
    for (std::size_t r = cwt.size(); r-- > 0;) {
        if (std::find(maxima[r].begin(), maxima[r].end(), true) != maxima[r].end()) {
            start_row = r;
            break;
        }
    }
    if (start_row == cwt.size()) return {};

    std::vector<Ridge> active, done;
    for (std::size_t c = 0; c < maxima[start_row].size(); ++c)
        if (maxima[start_row][c]) active.push_back({{start_row}, {c}, 0});

    for (std::size_t row = start_row; row-- > 0;) {
        for (auto& line : active) ++line.gap;
        std::vector<std::size_t> prev_cols;
        prev_cols.reserve(active.size());
        for (const auto& line : active) prev_cols.push_back(line.cols.back());

        for (std::size_t col = 0; col < maxima[row].size(); ++col) {
            if (!maxima[row][col]) continue;
            std::size_t closest = prev_cols.size();
            double best = 0.0;
            for (std::size_t i = 0; i < prev_cols.size(); ++i) {
                const double d = std::abs(static_cast<double>(col) - static_cast<double>(prev_cols[i]));
                if (closest == prev_cols.size() || d < best) {
                    best = d;
                    closest = i;
                }
            }
            if (closest != prev_cols.size() && best <= max_distances[row]) {
                auto& line = active[closest];
                line.cols.push_back(col);
                line.rows.push_back(row);
                line.gap = 0;
            } else {
                active.push_back({{row}, {col}, 0});
            }
        }
        for (std::size_t i = active.size(); i-- > 0;) {
            if (active[i].gap > gap_thresh) {
                done.push_back(std::move(active[i]));
                active.erase(active.begin() + static_cast<std::ptrdiff_t>(i));
            }
        }
    }
    done.insert(done.end(), std::make_move_iterator(active.begin()), std::make_move_iterator(active.end()));
    return done;
}

}  // namespace cwt

/// Number of ridge-line peaks across Ricker scales 1..max_width that reach
/// ceil(max_width / 4) scales and an SNR of at least 1 against the 10th-percentile
/// noise floor of the finest scale. A constant window has no peaks.
inline double number_cwt_peaks(std::span<const double> xs, long long max_width) {
    require(max_width >= 1, ErrorCode::BadParam, "max_width must be >= 1");
    require(xs.size() >= 3, ErrorCode::WindowTooShort, "number_cwt_peaks needs at least 3 points");
    require(!has_missing(xs), ErrorCode::HasMissing, "number_cwt_peaks requires a window without gaps");

    if (std::adjacent_find(xs.begin(), xs.end(), std::not_equal_to<>()) == xs.end()) return 0.0;

    const auto widths = static_cast<std::size_t>(max_width);
    const auto matrix = cwt::transform(xs, widths);
    std::vector<double> max_distances(widths);
    for (std::size_t i = 0; i < widths; ++i) max_distances[i] = static_cast<double>(i + 1) / 4.0;
    const auto lines = cwt::ridge_lines(matrix, max_distances, CwtRidgeRules::gap_thresh);

    const std::size_t n = xs.size();
    const auto min_length = static_cast<std::size_t>(std::ceil(static_cast<double>(widths) / 4.0));
    const auto window_size = static_cast<std::size_t>(std::ceil(static_cast<double>(n) / 20.0));
    const std::size_t half = window_size / 2, odd = window_size % 2;

    const auto& finest = matrix.front();
    std::vector<double> noise(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(i + half + odd, n);
        std::vector<double> seg(finest.begin() + static_cast<std::ptrdiff_t>(lo),
                                finest.begin() + static_cast<std::ptrdiff_t>(hi));
        std::sort(seg.begin(), seg.end());
        noise[i] = detail::sorted_quantile(seg, CwtRidgeRules::noise_percentile / 100.0);
    }

    std::size_t peaks = 0;
    for (const auto& line : lines) {
        if (line.rows.size() < min_length) continue;
        // the ridge is anchored at its finest-scale point
        const std::size_t row = line.rows.back(), col = line.cols.back();
        const double snr = std::abs(matrix[row][col] / noise[col]);
        if (snr < CwtRidgeRules::min_snr) continue;  // NaN snr passes, as in scipy
        ++peaks;
    }
    return static_cast<double>(peaks);
}

}  // namespace tsagent::tools
