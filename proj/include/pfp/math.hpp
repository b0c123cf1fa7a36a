#pragma once

#include <cmath>

namespace pfp::math {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kInvSqrt2Pi = 0.3989422804014326779;  // 1/sqrt(2*pi)
inline constexpr double kInvSqrt2 = 0.7071067811865475244;    // 1/sqrt(2)

// Rational approximation of erf (Abramowitz & Stegun 7.1.26 family),
// max absolute error 1.5e-7. Kept self-contained so the operator library
// does not depend on a libm erf being present on the target.
inline double erf_approx(double x) {
    const double sign = x < 0.0 ? -1.0 : 1.0;
    const double ax = std::fabs(x);

    const double t = 1.0 / (1.0 + 0.3275911 * ax);
    const double poly =
        t * (0.254829592 +
             t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    return sign * (1.0 - poly * std::exp(-ax * ax));
}

// Standard normal pdf / cdf built on erf_approx.
inline double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

inline double normal_cdf(double x) { return 0.5 * (1.0 + erf_approx(x * kInvSqrt2)); }

}  // namespace pfp::math
