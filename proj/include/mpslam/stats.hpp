#pragma once

#include <cmath>

#include "mpslam/geometry.hpp"

namespace mpslam {

/// log of the standard Gaussian density at x with given mean and stddev.
inline double log_normal_pdf(double x, double mean, double sigma) {
    const double z = (x - mean) / sigma;
    return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * kPi);
}

inline double normal_pdf(double x, double mean, double sigma) {
    return std::exp(log_normal_pdf(x, mean, sigma));
}

/// log I0(x), the modified Bessel function of the first kind, order zero.
/// Power series below the switch point, asymptotic expansion above; both
/// branches are accurate to ~1e-14 relative.
double log_bessel_i0(double x);

/// Regularized upper incomplete gamma function Q(s, x) = Gamma(s, x) / Gamma(s).
/// For integer s this is the CDF P[Poisson(x) <= s-1].
double gamma_q(double s, double x);

/// First-order Marcum Q function Q1(a, b), evaluated by the Poisson-mixture
/// series sum_k pmf_Poisson(k; a^2/2) * P[Poisson(b^2/2) <= k]. The summation
/// window is wide enough that the truncation error is below 1e-12.
double marcum_q1(double a, double b);

/// log(exp(a) + exp(b)) without overflow.
inline double log_add_exp(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace mpslam
