#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace vdsm {

// Domain failures that callers are expected to branch on. Plain bad arguments
// use std::invalid_argument.
struct TrainingDivergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UndefinedMetric : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IngestionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr double kInvSqrtPi = 0.5641895835477562869;
inline constexpr double kLnTwoPi = 1.8378770664093454836;

inline double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Inverse of softplus on (0, inf).
inline double inv_softplus(double y) {
    if (y <= 0.0) throw std::invalid_argument("inv_softplus: argument must be positive");
    return y > 30.0 ? y : std::log(std::expm1(y));
}

inline double log_sum_exp(const double* v, std::size_t n) {
    if (n == 0) throw std::invalid_argument("log_sum_exp: empty input");
    double m = v[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, v[i]);
    if (!std::isfinite(m)) return m;  // all -inf (or a nan/ inf dominates)
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
    return m + std::log(s);
}

inline double log_sum_exp(const std::vector<double>& v) {
    return log_sum_exp(v.data(), v.size());
}

// Scaled complementary error function e^{x^2} erfc(x). Direct product below
// the crossover, Laplace continued fraction above it.
inline double erfcx(double x) {
    if (x < 0.0) return 2.0 * std::exp(x * x) - erfcx(-x);
    if (x < 2.75) return std::exp(x * x) * std::erfc(x);
    double cf = 0.0;
    for (int k = 60; k >= 1; --k) cf = (0.5 * k) / (x + cf);
    return kInvSqrtPi / (x + cf);
}

// ln(erfc(x)/2), stable into the far right tail where erfc underflows.
inline double log_half_erfc(double x) {
    if (x < 0.0) return std::log(0.5 * std::erfc(x));
    return -x * x + std::log(0.5 * erfcx(x));
}

// d/dx ln(erfc(x)/2) = -(2/sqrt(pi)) e^{-x^2} / erfc(x)
inline double d_log_half_erfc(double x) {
    if (x < 0.0) return -2.0 * kInvSqrtPi * std::exp(-x * x) / std::erfc(x);
    return -2.0 * kInvSqrtPi / erfcx(x);
}

}  // namespace vdsm
