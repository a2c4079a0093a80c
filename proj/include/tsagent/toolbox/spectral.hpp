#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tsagent/error.hpp"
#include "tsagent/series.hpp"
#include "tsagent/toolbox/fft.hpp"

namespace tsagent::tools {

enum class FftAttr { Real, Imag, Abs, Angle };

/// Requested real-input DFT coefficient attributes, keyed "coeff_<k>".
inline std::vector<std::pair<std::string, double>> fft_coefficient(std::span<const double> xs,
                                                                   std::span<const long long> coeffs,
                                                                   FftAttr attr) {
    require(!coeffs.empty(), ErrorCode::BadParam, "coeffs must not be empty");
    require(!has_missing(xs), ErrorCode::HasMissing, "fft_coefficient requires a window without gaps");
    const auto bins = fft::rfft(xs);
    std::vector<std::pair<std::string, double>> out;
    for (long long k : coeffs) {
        require(k >= 0 && static_cast<std::size_t>(k) < bins.size(), ErrorCode::BadParam,
                "coefficient " + std::to_string(k) + " outside 0.." + std::to_string(bins.size() - 1));
        const auto c = bins[static_cast<std::size_t>(k)];
        double v = 0.0;
        switch (attr) {
            case FftAttr::Real: v = c.real(); break;
            case FftAttr::Imag: v = c.imag(); break;
            case FftAttr::Abs: v = std::abs(c); break;
            case FftAttr::Angle: v = std::arg(c) * 180.0 / std::numbers::pi; break;
        }
        out.emplace_back("coeff_" + std::to_string(k), v);
    }
    return out;
}

/// Welch segmentation parameters used by the frequency tools.
struct WelchPlan {
    std::size_t nperseg = 0;
    std::size_t noverlap = 0;

    static WelchPlan for_length(std::size_t n) {
        const std::size_t seg = std::min<std::size_t>(256, n);
        return {seg, seg / 2};
    }
    std::size_t bins() const { return nperseg / 2 + 1; }
};

inline constexpr std::size_t kMinWelchLength = 8;

/// One-sided Welch PSD (fs = 1): periodic Hann window, constant detrend per
/// segment, density scaling, mean over segments.
inline std::vector<double> welch_psd(std::span<const double> xs) {
    require(xs.size() >= kMinWelchLength, ErrorCode::WindowTooShort,
            "frequency tools need at least 8 points");
    require(!has_missing(xs), ErrorCode::HasMissing, "frequency tools require a window without gaps");
    const WelchPlan plan = WelchPlan::for_length(xs.size());
    const std::size_t seg = plan.nperseg, step = seg - plan.noverlap;

    std::vector<double> win(seg);
    double wsq = 0.0;
    for (std::size_t i = 0; i < seg; ++i) {
        win[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                      static_cast<double>(seg));
        wsq += win[i] * win[i];
    }
    const double scale = 1.0 / wsq;

    std::vector<double> psd(plan.bins(), 0.0);
    std::size_t segments = 0;
    std::vector<double> buf(seg);
    for (std::size_t start = 0; start + seg <= xs.size(); start += step) {
        double mean = 0.0;
        for (std::size_t i = 0; i < seg; ++i) mean += xs[start + i];
        mean /= static_cast<double>(seg);
        for (std::size_t i = 0; i < seg; ++i) buf[i] = (xs[start + i] - mean) * win[i];
        const auto spec = fft::rfft(buf);
        for (std::size_t k = 0; k < psd.size(); ++k) psd[k] += std::norm(spec[k]) * scale;
        ++segments;
    }
    for (std::size_t k = 0; k < psd.size(); ++k) {
        psd[k] /= static_cast<double>(segments);
        const bool nyquist = seg % 2 == 0 && k == psd.size() - 1;
        if (k != 0 && !nyquist) psd[k] *= 2.0;
    }
    return psd;
}

inline std::vector<std::pair<std::string, double>> spkt_welch_density(std::span<const double> xs,
                                                                      std::span<const long long> coeffs) {
    require(!coeffs.empty(), ErrorCode::BadParam, "coeffs must not be empty");
    const auto psd = welch_psd(xs);
    std::vector<std::pair<std::string, double>> out;
    for (long long k : coeffs) {
        require(k >= 0 && static_cast<std::size_t>(k) < psd.size(), ErrorCode::BadParam,
                "coefficient " + std::to_string(k) + " outside 0.." + std::to_string(psd.size() - 1));
        out.emplace_back("coeff_" + std::to_string(k), psd[static_cast<std::size_t>(k)]);
    }
    return out;
}

/// Shannon entropy (nats) of the max-normalized Welch PSD binned on [0, 1].
inline double fourier_entropy(std::span<const double> xs, long long bins) {
    require(bins >= 1, ErrorCode::BadParam, "bins must be >= 1");
    const auto psd = welch_psd(xs);
    const double peak = *std::max_element(psd.begin(), psd.end());
    require(peak > 0.0, ErrorCode::ZeroVariance, "window has an all-zero spectrum");

    const auto nb = static_cast<std::size_t>(bins);
    std::vector<double> edges(nb + 1);
    for (std::size_t i = 0; i <= nb; ++i) edges[i] = static_cast<double>(i) / static_cast<double>(nb);
    std::vector<std::size_t> counts(nb, 0);
    for (double p : psd) {
        const double v = p / peak;
        auto idx = static_cast<std::size_t>(std::min(v * static_cast<double>(nb), static_cast<double>(nb - 1)));
        // settle floating-point disagreements with the explicit edges
        if (idx > 0 && v < edges[idx]) --idx;
        if (idx + 1 < nb && v >= edges[idx + 1]) ++idx;
        ++counts[idx];
    }
    double h = 0.0;
    for (std::size_t c : counts) {
        if (c == 0) continue;
        const double prob = static_cast<double>(c) / static_cast<double>(psd.size());
        h -= prob * std::log(prob);
    }
    return h;
}

}  // namespace tsagent::tools
