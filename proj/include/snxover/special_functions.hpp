#ifndef SNXOVER_SPECIAL_FUNCTIONS_HPP_
#define SNXOVER_SPECIAL_FUNCTIONS_HPP_

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/special_functions/gamma.hpp>

namespace snxover {

inline constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934;
inline constexpr double kSqrt2OverPi = 0.797884560802865355879892119869;
inline constexpr double kLogSqrt2Pi = 0.918938533204672741780329736406;

/// Standard normal density.
inline double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

/// Standard normal distribution function. erfc keeps full relative accuracy
/// in the lower tail, which the mills ratio below depends on.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

struct NormalPdfCdf {
  double phi;
  double Phi;
};

inline NormalPdfCdf normal_pdf_cdf(double x) { return {normal_pdf(x), normal_cdf(x)}; }

namespace detail {

/*
 * Upper-tail Mills ratio R(z) = (1 - Phi(z)) / phi(z) for large positive z,
 * evaluated as the Laplace continued fraction
 *
 *   R(z) = 1 / (z + 1 / (z + 2 / (z + 3 / (z + ...))))
 *
 * backwards from a fixed depth. For z >= 8 forty terms are far past
 * double precision.
 */
inline double upper_mills_continued_fraction(double z) {
  constexpr int kDepth = 60;
  double tail = z;
  for (int k = kDepth; k >= 1; --k) {
    tail = z + static_cast<double>(k) / tail;
  }
  return 1.0 / tail;
}

inline constexpr double kMillsAsymptoticCutoff = -8.0;

}  // namespace detail

/// phi(x) / Phi(x). Switches to a continued fraction below x = -8 where both
/// numerator and denominator underflow toward 0/0.
inline double mills(double x) {
  if (x < detail::kMillsAsymptoticCutoff) {
    return 1.0 / detail::upper_mills_continued_fraction(-x);
  }
  return normal_pdf(x) / normal_cdf(x);
}

/// log Phi(x), finite for arbitrarily negative x.
inline double log_normal_cdf(double x) {
  if (x < detail::kMillsAsymptoticCutoff) {
    const double log_phi = -0.5 * x * x - kLogSqrt2Pi;
    return log_phi + std::log(detail::upper_mills_continued_fraction(-x));
  }
  return std::log(normal_cdf(x));
}

/// Regularized lower incomplete gamma P(df/2, x/2).
inline double chi2_cdf(double x, int df) {
  if (std::isnan(x)) {
    return x;
  }
  if (x <= 0.0) {
    return 0.0;
  }
  if (std::isinf(x)) {
    return 1.0;
  }
  return boost::math::gamma_p(0.5 * df, 0.5 * x);
}

/// Upper tail Q(df/2, x/2), computed directly rather than as 1 - cdf.
inline double chi2_sf(double x, int df) {
  if (x <= 0.0) {
    return 1.0;
  }
  if (std::isinf(x)) {
    return 0.0;
  }
  return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

inline double chi2_quantile(double p, int df) {
  return 2.0 * boost::math::gamma_p_inv(0.5 * df, p);
}

/*
 * Survival function of the Kolmogorov distribution,
 * P(K > x) with K = sup |B(t)| for a Brownian bridge.
 *
 * Two series are used: the alternating series converges quickly for
 * x >~ 1, the theta-function form for small x.
 */
inline double kolmogorov_sf(double x) {
  if (x <= 0.0) {
    return 1.0;
  }
  if (x < 1.0) {
    const double pi2 = std::numbers::pi * std::numbers::pi;
    double sum = 0.0;
    for (int k = 1; k <= 50; ++k) {
      const double odd = 2.0 * k - 1.0;
      const double term = std::exp(-odd * odd * pi2 / (8.0 * x * x));
      sum += term;
      if (term < 1e-18) {
        break;
      }
    }
    const double cdf = std::sqrt(2.0 * std::numbers::pi) / x * sum;
    return std::clamp(1.0 - cdf, 0.0, 1.0);
  }
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-18) {
      break;
    }
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

}  // namespace snxover

#endif  // SNXOVER_SPECIAL_FUNCTIONS_HPP_
