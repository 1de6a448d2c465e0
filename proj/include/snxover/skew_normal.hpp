#ifndef SNXOVER_SKEW_NORMAL_HPP_
#define SNXOVER_SKEW_NORMAL_HPP_

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>

#include "snxover/random.hpp"
#include "snxover/special_functions.hpp"

namespace snxover {

/// Univariate skew-normal SN(xi, omega2, lambda) in direct parameters.
struct SnUnivariate {
  double xi = 0.0;
  double omega2 = 1.0;
  double lambda = 0.0;
};

/*
 * SN_n(mu, sigma2 * I, lambda_vec) with skewness carried by a single
 * coordinate. lambda_vec is stored as the index of the skewed coordinate
 * and its shape value; every other coordinate is normal.
 */
struct SnRestrictedMultivariate {
  Eigen::VectorXd mu;
  double sigma2 = 1.0;
  double lambda = 0.0;
  Eigen::Index skewed_coordinate = 0;
};

struct SnMoments {
  double mean;
  double variance;
  double skewness;
};

inline double delta_of_lambda(double lambda) { return lambda / std::sqrt(1.0 + lambda * lambda); }

/// d delta / d lambda and its second derivative.
inline double delta_prime(double lambda) { return std::pow(1.0 + lambda * lambda, -1.5); }
inline double delta_second(double lambda) {
  return -3.0 * lambda * std::pow(1.0 + lambda * lambda, -2.5);
}

inline double sn_pdf(double x, const SnUnivariate &params) {
  const double omega = std::sqrt(params.omega2);
  const double z = (x - params.xi) / omega;
  return 2.0 * normal_pdf(z) / omega * normal_cdf(params.lambda * z);
}

inline double half_normal_sample(RngStream &rng) { return std::abs(rng.normal()); }

/*
 * Draw through the additive representation
 *   xi + omega * (delta |U1| + sqrt(1 - delta^2) U0).
 * U0 is drawn first; the half-normal draw is skipped when delta == 0 so a
 * symmetric SN consumes the stream exactly like a plain normal sampler.
 */
inline double sn_sample(const SnUnivariate &params, RngStream &rng) {
  const double delta = delta_of_lambda(params.lambda);
  const double omega = std::sqrt(params.omega2);
  const double u0 = rng.normal();
  if (delta == 0.0) {
    return params.xi + omega * u0;
  }
  const double t = half_normal_sample(rng);
  return params.xi + omega * (delta * t + std::sqrt(1.0 - delta * delta) * u0);
}

inline Eigen::VectorXd sn_sample_vector(const SnRestrictedMultivariate &params, RngStream &rng) {
  const Eigen::Index n = params.mu.size();
  if (n == 0 || params.skewed_coordinate < 0 || params.skewed_coordinate >= n) {
    throw std::invalid_argument("sn_sample_vector: skewed coordinate outside the location vector");
  }
  const double delta = delta_of_lambda(params.lambda);
  const double scale = std::sqrt(params.sigma2);
  Eigen::VectorXd w(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    w[k] = rng.normal();
  }
  if (delta != 0.0) {
    const double t = half_normal_sample(rng);
    double &skewed = w[params.skewed_coordinate];
    skewed = delta * t + std::sqrt(1.0 - delta * delta) * skewed;
  }
  return params.mu + scale * w;
}

/// Mean, variance and skewness of SN(xi, omega2, lambda).
inline SnMoments sn_moments(const SnUnivariate &params) {
  const double delta = delta_of_lambda(params.lambda);
  const double mu_w = delta * kSqrt2OverPi;
  const double var_w = 1.0 - delta * delta * (2.0 / std::numbers::pi);
  const double skew = 0.5 * (4.0 - std::numbers::pi) * mu_w * mu_w * mu_w / std::pow(var_w, 1.5);
  const double omega = std::sqrt(params.omega2);
  return {params.xi + omega * mu_w, params.omega2 * var_w, skew};
}

}  // namespace snxover

#endif  // SNXOVER_SKEW_NORMAL_HPP_
