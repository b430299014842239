#pragma once

// Scalar special functions used throughout the library. The normal PDF/CDF
// are erf/erfc based and accurate to better than 1e-12 over the ranges the
// models evaluate them on; no external statistical dependency.

#include <cmath>
#include <limits>
#include <stdexcept>

namespace nlr {

inline constexpr double kSqrt2 = 1.4142135623730950488016887242097;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;

/// Standard normal density.
inline double normal_pdf(double x) {
    return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

inline double normal_log_pdf(double x) {
    // log(1/sqrt(2*pi)) = -0.9189385332046727...
    return -0.91893853320467274178032973640562 - 0.5 * x * x;
}

/// Standard normal CDF via erfc (stable in both tails).
inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / kSqrt2);
}

/// Upper tail P{Z > x}.
inline double normal_sf(double x) {
    return 0.5 * std::erfc(x / kSqrt2);
}

/// log(1+x) guarded for x <= -1 (maps to -inf at -1).
inline double log1p_checked(double x) {
    if (x < -1.0) throw std::invalid_argument("log1p argument below -1");
    if (x == -1.0) return -std::numeric_limits<double>::infinity();
    return std::log1p(x);
}

inline bool nearly_equal(double a, double b, double tol) {
    return std::fabs(a - b) <= tol * std::max({1.0, std::fabs(a), std::fabs(b)});
}

} // namespace nlr
