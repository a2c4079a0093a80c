#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>

#include <Eigen/Dense>

#include "tsagent/error.hpp"
#include "tsagent/series.hpp"

namespace tsagent::tools {

inline constexpr std::size_t kMinAdfLength = 20;

namespace adf {

struct OlsFit {
    double ssr = 0.0;
    double tvalue_level = 0.0;  // t statistic of the lagged-level column
    std::size_t nobs = 0;
    std::size_t params = 0;

    double aic() const {
        const double n = static_cast<double>(nobs);
        const double llf = -n / 2.0 * (std::log(2.0 * std::numbers::pi) + std::log(ssr / n) + 1.0);
        return -2.0 * llf + 2.0 * static_cast<double>(params);
    }
};

/// Upper bound of the AIC lag search: floor(12 (n/100)^(1/4)), capped so the
/// widest regression keeps more rows than columns.
inline std::size_t max_lag(std::size_t n) {
    const auto rule = static_cast<std::size_t>(std::floor(12.0 * std::pow(static_cast<double>(n) / 100.0, 0.25)));
    const long long cap = static_cast<long long>(n / 2) - 2;
    return static_cast<std::size_t>(std::max<long long>(0, std::min<long long>(static_cast<long long>(rule), cap)));
}

// Design for dx[j] = a + rho x[j] + sum_{i=1..lags} phi_i dx[j-i], rows j = first..n-2.
inline void build(std::span<const double> x, std::size_t first, std::size_t lags, Eigen::MatrixXd& design,
                  Eigen::VectorXd& target) {
    const std::size_t n = x.size();
    const std::size_t rows = n - 1 - first;
    design.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(lags + 2));
    target.resize(static_cast<Eigen::Index>(rows));
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t j = first + r;
        const auto ri = static_cast<Eigen::Index>(r);
        target(ri) = x[j + 1] - x[j];
        design(ri, 0) = 1.0;
        design(ri, 1) = x[j];
        for (std::size_t i = 1; i <= lags; ++i)
            design(ri, static_cast<Eigen::Index>(i + 1)) = x[j + 1 - i] - x[j - i];
    }
}

inline Eigen::ColPivHouseholderQR<Eigen::MatrixXd> decompose(const Eigen::MatrixXd& design) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(1e-10);
    return qr;
}

inline bool full_rank(const Eigen::MatrixXd& design) {
    return decompose(design).rank() == design.cols();
}

inline OlsFit fit(const Eigen::MatrixXd& design, const Eigen::VectorXd& target) {
    const auto qr = decompose(design);
    const auto cols = design.cols();
    require(qr.rank() == cols, ErrorCode::Singular, "ADF regression matrix is rank-deficient");
    const Eigen::VectorXd beta = qr.solve(target);
    const Eigen::VectorXd resid = target - design * beta;

    OlsFit out;
    out.nobs = static_cast<std::size_t>(design.rows());
    out.params = static_cast<std::size_t>(cols);
    out.ssr = resid.squaredNorm();
    require(out.ssr > 0.0, ErrorCode::Singular, "ADF regression fits exactly; statistic undefined");

    const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(cols, cols).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd rinv =
        r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(cols, cols));
    const Eigen::MatrixXd cov_unit = rinv * rinv.transpose();
    const auto& perm = qr.colsPermutation().indices();
    Eigen::Index level_pos = 0;
    for (Eigen::Index p = 0; p < cols; ++p)
        if (perm(p) == 1) level_pos = p;
    const double sigma2 = out.ssr / static_cast<double>(out.nobs - out.params);
    out.tvalue_level = beta(1) / std::sqrt(sigma2 * cov_unit(level_pos, level_pos));
    return out;
}

}  // namespace adf

/// ADF t-statistic of the lagged level with a constant term; lag order chosen by
/// AIC over 0..max_lag on a common estimation sample, then refit. Lag orders whose
/// design is collinear are left out of the search.
inline double augmented_dickey_fuller(std::span<const double> xs) {
    require(xs.size() >= kMinAdfLength, ErrorCode::WindowTooShort, "ADF needs at least 20 points");
    require(!has_missing(xs), ErrorCode::HasMissing, "ADF requires a window without gaps");

    const std::size_t maxlag = adf::max_lag(xs.size());
    Eigen::MatrixXd design;
    Eigen::VectorXd target;
    adf::build(xs, maxlag, maxlag, design, target);

    double best_aic = std::numeric_limits<double>::infinity();
    std::size_t best_lag = 0;
    for (std::size_t lag = 0; lag <= maxlag; ++lag) {
        const Eigen::MatrixXd cols = design.leftCols(static_cast<Eigen::Index>(lag + 2));
        if (!adf::full_rank(cols)) break;  // adding columns cannot restore rank
        const double aic = adf::fit(cols, target).aic();
        if (aic < best_aic) {
            best_aic = aic;
            best_lag = lag;
        }
    }
    adf::build(xs, best_lag, best_lag, design, target);
    return adf::fit(design, target).tvalue_level;
}

}  // namespace tsagent::tools
