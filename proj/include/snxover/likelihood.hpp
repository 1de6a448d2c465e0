#ifndef SNXOVER_LIKELIHOOD_HPP_
#define SNXOVER_LIKELIHOOD_HPP_

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "snxover/covariance.hpp"
#include "snxover/model.hpp"
#include "snxover/special_functions.hpp"

namespace snxover {

/// Conditional moments of the latent half-normal t given y.
struct EStepMoments {
  double eta = 0.0;
  double zeta2 = 1.0;
  double t01 = kSqrt2OverPi;
  double t02 = 1.0;
};

/// E[X] and E[X^2] for X ~ N(eta, zeta^2) truncated to X > 0.
inline EStepMoments truncated_normal_moments(double eta, double zeta2) {
  const double zeta = std::sqrt(zeta2);
  const double ratio = mills(eta / zeta);
  EStepMoments m;
  m.eta = eta;
  m.zeta2 = zeta2;
  m.t01 = eta + zeta * ratio;
  m.t02 = eta * eta + zeta2 + eta * zeta * ratio;
  return m;
}

/// E-step for one subject given its marginal residual y - X beta.
inline EStepMoments e_step(const Covariance &cov, const Eigen::VectorXd &residual) {
  const Eigen::VectorXd vinv_d = cov.Vinv * cov.d;
  const double c = cov.d.dot(vinv_d);
  const double eta = vinv_d.dot(residual) / (1.0 + c);
  return truncated_normal_moments(eta, 1.0 / (1.0 + c));
}

inline std::vector<EStepMoments> e_step(const Covariance &cov, const std::vector<Subject> &subjects,
                                        const Eigen::VectorXd &beta) {
  std::vector<EStepMoments> out;
  out.reserve(subjects.size());
  const Eigen::VectorXd vinv_d = cov.Vinv * cov.d;
  const double c = cov.d.dot(vinv_d);
  for (const auto &s : subjects) {
    const double eta = vinv_d.dot(s.y - s.X * beta) / (1.0 + c);
    out.push_back(truncated_normal_moments(eta, 1.0 / (1.0 + c)));
  }
  return out;
}

/*
 * Observed-data log-likelihood. Integrating t out gives the skew-normal
 *
 *   f(y) = 2 phi_pm(y | X beta, Sigma) Phi(d' V^-1 r / sqrt(1 + d' V^-1 d)),
 *
 * Sigma = V + d d', handled through the determinant lemma and
 * Sherman-Morrison so only V^-1 is needed.
 */
inline double marginal_loglik(const ThetaState &theta, const std::vector<Subject> &subjects, int pm) {
  const Covariance cov = assemble(theta, pm);
  const Eigen::VectorXd vinv_d = cov.Vinv * cov.d;
  const double c = cov.d.dot(vinv_d);
  const double logdet_sigma = cov.logdet + std::log1p(c);
  const double constant = -0.5 * (pm * 2.0 * kLogSqrt2Pi + logdet_sigma);
  const bool skewed = c > 0.0;
  double total = 0.0;
  for (const auto &s : subjects) {
    const Eigen::VectorXd r = s.y - s.X * theta.beta;
    const double proj = vinv_d.dot(r);
    const double quad = r.dot(cov.Vinv * r) - proj * proj / (1.0 + c);
    double term = constant - 0.5 * quad;
    if (skewed) {
      term += std::numbers::ln2 + log_normal_cdf(proj / std::sqrt(1.0 + c));
    }
    total += term;
  }
  return total;
}

struct InformationCriteria {
  double aic;
  double bic;
};

inline InformationCriteria aic_bic(double loglik, int k, long n_obs) {
  return {2.0 * k - 2.0 * loglik, k * std::log(static_cast<double>(n_obs)) - 2.0 * loglik};
}

}  // namespace snxover

#endif  // SNXOVER_LIKELIHOOD_HPP_
