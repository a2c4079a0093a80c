#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

namespace tsagent::fft {

using cplx = std::complex<double>;

namespace detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
    std::size_t m = 1;
    while (m < n) m <<= 1;
    return m;
}

// In-place iterative radix-2; twiddles evaluated directly per stage.
inline void radix2(std::vector<cplx>& a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        std::vector<cplx> tw(half);
        for (std::size_t k = 0; k < half; ++k) {
            const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>(k) /
                               static_cast<double>(len);
            tw[k] = {std::cos(ang), std::sin(ang)};
        }
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < half; ++k) {
                const cplx u = a[i + k];
                const cplx v = a[i + k + half] * tw[k];
                a[i + k] = u + v;
                a[i + k + half] = u - v;
            }
        }
    }
    if (inverse)
        for (auto& x : a) x /= static_cast<double>(n);
}

// Bluestein chirp-z for arbitrary lengths.
inline std::vector<cplx> bluestein(std::span<const cplx> x) {
    const std::size_t n = x.size();
    const std::size_t m = next_pow2(2 * n - 1);
    std::vector<cplx> chirp(n);
    for (std::size_t k = 0; k < n; ++k) {
        // k^2 mod 2n keeps the angle argument small
        const auto k2 = static_cast<unsigned long long>(k) * k % (2ULL * n);
        const double ang = -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
        chirp[k] = {std::cos(ang), std::sin(ang)};
    }
    std::vector<cplx> a(m), b(m);
    for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * chirp[k];
    b[0] = std::conj(chirp[0]);
    for (std::size_t k = 1; k < n; ++k) b[k] = b[m - k] = std::conj(chirp[k]);
    radix2(a, false);
    radix2(b, false);
    for (std::size_t i = 0; i < m; ++i) a[i] *= b[i];
    radix2(a, true);
    std::vector<cplx> out(n);
    for (std::size_t k = 0; k < n; ++k) out[k] = a[k] * chirp[k];
    return out;
}

}  // namespace detail

/// Forward DFT, X_k = sum_t x_t exp(-2 pi i k t / n).
inline std::vector<cplx> dft(std::span<const cplx> x) {
    if (x.empty()) return {};
    if (detail::is_pow2(x.size())) {
        std::vector<cplx> a(x.begin(), x.end());
        detail::radix2(a, false);
        return a;
    }
    return detail::bluestein(x);
}

/// Real-input DFT returning the n/2 + 1 non-negative frequency bins.
/// DC and (for even n) Nyquist bins have their imaginary part set to exactly zero.
inline std::vector<cplx> rfft(std::span<const double> x) {
    std::vector<cplx> c(x.begin(), x.end());
    auto full = dft(c);
    const std::size_t bins = x.size() / 2 + 1;
    full.resize(bins);
    if (!full.empty()) full[0].imag(0.0);
    if (x.size() % 2 == 0 && bins > 1) full[bins - 1].imag(0.0);
    return full;
}

}  // namespace tsagent::fft
