#pragma once

// Small numeric helpers: logistic function, clipping, normal quantile.

#include <algorithm>
#include <cmath>

#include "harmbound/errors.hpp"

namespace harmbound {

inline double clip(double v, double lo, double hi) {
    return std::min(std::max(v, lo), hi);
}

// Logistic sigmoid with overflow guards; exact at the extremes.
inline double sigmoid(double t) {
    if (t >= 0.0) {
        const double z = std::exp(-t);
        return 1.0 / (1.0 + z);
    }
    const double z = std::exp(t);
    return z / (1.0 + z);
}

inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / 1.4142135623730950488016887242097);
}

// Inverse standard normal CDF: Acklam's rational approximation (abs error
// ~1.15e-9) followed by one Halley refinement step, which brings the result
// to near machine precision — far beyond what CI construction needs.
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw input_error("normal_quantile: p must lie in (0,1)");

    static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                    -2.759285104469687e+02, 1.383577518672690e+02,
                                    -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                    -1.556989798598866e+02, 6.680131188771972e+01,
                                    -1.328068155288572e+01};
    static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                    -2.400758277161838e+00, -2.549732539343734e+00,
                                    4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                    2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double plow = 0.02425;

    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    // Halley step on f(x) = Phi(x) - p.
    const double err = normal_cdf(x) - p;
    const double u = err * 2.5066282746310005024157652848110 * std::exp(0.5 * x * x);
    x = x - u / (1.0 + 0.5 * x * u);
    return x;
}

} // namespace harmbound
