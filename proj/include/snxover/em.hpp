#ifndef SNXOVER_EM_HPP_
#define SNXOVER_EM_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "snxover/covariance.hpp"
#include "snxover/likelihood.hpp"
#include "snxover/model.hpp"
#include "snxover/q_function.hpp"
#include "snxover/special_functions.hpp"

namespace snxover {

inline constexpr double kVarianceFloor = 1e-10;
inline constexpr double kInitVarianceFloor = 1e-6;
inline constexpr int kMaxHalvings = 30;
inline constexpr double kLambdaSingularityBand = 0.05;
/// Beyond this |lambda| the skew-normal is numerically the half-normal
/// limit; a fit that gets here is chasing a likelihood supremum at the
/// boundary and is stopped as non-converged.
inline constexpr double kLambdaDivergenceBound = 1e3;

struct FitOptions {
  double tolerance = 5e-3;
  int max_iter = 500;
  /// Hold lambda at its initial value (the SN scenarios then nest the
  /// normal baseline exactly when it is 0).
  bool freeze_lambda = false;
  std::optional<ThetaState> initial;
  bool compute_standard_errors = true;
};

struct FitResult {
  ThetaState theta;
  /// Free-parameter names and their standard errors, in the order
  /// beta..., sigma_e2, sigma_s2[, lambda].
  std::vector<std::string> parameter_names;
  Eigen::VectorXd se;
  double corrected_intercept = 0.0;
  double loglik = 0.0;
  double aic = 0.0;
  double bic = 0.0;
  int k = 0;
  long n_obs = 0;
  int iterations = 0;
  bool converged = false;
  bool lambda_free = false;
  int stalled_steps = 0;
  std::vector<double> trajectory;
  std::vector<std::string> warnings;
};

inline int free_parameter_count(int q, Scenario scenario, bool freeze_lambda) {
  return q + 2 + (is_skewed(scenario) && !freeze_lambda ? 1 : 0);
}

/// Intercept shifted by the mean of the skew term, d_1 sqrt(2/pi); d_1 is
/// the first entry of d (the only nonzero one for skewed errors, the
/// common one for a skewed random intercept).
inline double corrected_intercept(const ThetaState &theta) {
  const double delta = delta_of_lambda(effective_lambda(theta.scenario, theta.lambda));
  const double scale = theta.scenario == Scenario::EffectSN ? std::sqrt(theta.sigma_s2) : std::sqrt(theta.sigma_e2);
  return theta.beta[0] + scale * delta * kSqrt2OverPi;
}

inline Eigen::VectorXd gls_beta(const std::vector<Subject> &subjects, const Eigen::MatrixXd &Vinv) {
  const Eigen::Index q = subjects.front().X.cols();
  Eigen::MatrixXd lhs = Eigen::MatrixXd::Zero(q, q);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(q);
  for (const auto &s : subjects) {
    const Eigen::MatrixXd xt_vinv = s.X.transpose() * Vinv;
    lhs.noalias() += xt_vinv * s.X;
    rhs.noalias() += xt_vinv * s.y;
  }
  return lhs.colPivHouseholderQr().solve(rhs);
}

/*
 * Starting values: OLS residuals give one-way ANOVA moment estimates
 *
 *   sigma_e^2 = MS_within,  sigma_s^2 = (MS_between - MS_within) / pm,
 *
 * floored at 1e-6, then beta is refit by GLS under those components.
 * lambda starts at 1 for the skewed scenarios (away from the lambda = 0
 * singularity of the information) and at 0 for the baseline.
 */
inline ThetaState initialize(const Dataset &data, Scenario scenario, std::vector<std::string> *warnings = nullptr) {
  const auto &subjects = data.subjects;
  if (subjects.empty()) {
    throw DataError("initialize: dataset has no subjects");
  }
  const int pm = data.pm();
  const double n = static_cast<double>(subjects.size());
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(pm, pm);
  const Eigen::VectorXd beta_ols = gls_beta(subjects, identity);

  double within = 0.0;
  double grand = 0.0;
  std::vector<double> means;
  means.reserve(subjects.size());
  for (const auto &s : subjects) {
    const Eigen::VectorXd r = s.y - s.X * beta_ols;
    const double mean = r.mean();
    within += (r.array() - mean).square().sum();
    means.push_back(mean);
    grand += r.sum();
  }
  grand /= n * pm;
  double between = 0.0;
  for (double mean : means) {
    between += (mean - grand) * (mean - grand);
  }

  double sigma_e2 = 0.0;
  double sigma_s2 = 0.0;
  if (pm > 1) {
    const double ms_within = within / (n * (pm - 1));
    const double ms_between = n > 1 ? pm * between / (n - 1) : 0.0;
    sigma_e2 = ms_within;
    sigma_s2 = (ms_between - ms_within) / pm;
  } else {
    // One observation per subject: the components are not separable.
    const double total = n > 1 ? between / (n - 1) : 0.0;
    sigma_e2 = 0.5 * total;
    sigma_s2 = 0.5 * total;
  }
  if (sigma_e2 < kInitVarianceFloor && warnings != nullptr) {
    warnings->push_back("degenerate data: within-subject variance below floor at initialization");
  }
  sigma_e2 = std::max(sigma_e2, kInitVarianceFloor);
  sigma_s2 = std::max(sigma_s2, kInitVarianceFloor);

  ThetaState theta;
  theta.scenario = scenario;
  theta.sigma_e2 = sigma_e2;
  theta.sigma_s2 = sigma_s2;
  theta.lambda = is_skewed(scenario) ? 1.0 : 0.0;
  const Covariance cov = assemble(VarianceParams(sigma_e2, sigma_s2, 0.0), Scenario::NormalBaseline, pm);
  theta.beta = gls_beta(subjects, cov.Vinv);
  return theta;
}

struct NrStep {
  VarianceParams xi;
  double q_before = 0.0;
  double q_after = 0.0;
  int halvings = 0;
  bool gradient_fallback = false;
  bool stalled = false;
};

/*
 * One Newton-Raphson update of the variance components on the Q-function,
 * safeguarded so that it is a GEM step: the step is halved (up to 30
 * times) until both variances stay above 1e-10 and Q does not decrease.
 * When -H is not positive definite on the free block the Newton direction
 * is replaced by a scaled gradient. If no trial point increases Q the old
 * value is returned with `stalled` set.
 */
inline NrStep nr_step(const VarianceParams &xi, Scenario scenario, const QStatistics &st, bool lambda_free) {
  const int nfree = lambda_free ? 3 : 2;
  NrStep out;
  out.xi = xi;
  out.q_before = q_value(xi, scenario, st);
  out.q_after = out.q_before;

  const Eigen::Vector3d g = q_gradient(xi, scenario, st);
  const Eigen::Matrix3d H = q_hessian(xi, scenario, st);
  const Eigen::VectorXd gf = g.head(nfree);
  const Eigen::MatrixXd neg_h = -H.topLeftCorner(nfree, nfree);

  Eigen::VectorXd direction;
  Eigen::LLT<Eigen::MatrixXd> llt(neg_h);
  if (llt.info() == Eigen::Success) {
    direction = llt.solve(gf);
  }
  if (direction.size() == 0 || !direction.allFinite()) {
    out.gradient_fallback = true;
    const double gmax = gf.cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, xi.head(nfree).cwiseAbs().maxCoeff());
    direction = gmax > 0.0 ? Eigen::VectorXd(gf * (0.1 * scale / gmax)) : Eigen::VectorXd::Zero(nfree);
  }

  double factor = 1.0;
  for (int h = 0; h <= kMaxHalvings; ++h, factor *= 0.5) {
    VarianceParams candidate = xi;
    candidate.head(nfree) += factor * direction;
    if (!(candidate[kSigmaE2] > kVarianceFloor) || !(candidate[kSigmaS2] > kVarianceFloor) ||
        !candidate.allFinite()) {
      continue;
    }
    double q_candidate = 0.0;
    try {
      q_candidate = q_value(candidate, scenario, st);
    } catch (const NotPositiveDefinite &) {
      continue;
    }
    if (std::isfinite(q_candidate) && q_candidate >= out.q_before) {
      out.xi = candidate;
      out.q_after = q_candidate;
      out.halvings = h;
      return out;
    }
  }
  out.stalled = true;
  out.halvings = kMaxHalvings;
  return out;
}

/// Parameter vector (beta, sigma_e2, sigma_s2[, lambda]) of the free
/// parameters.
inline Eigen::VectorXd pack_free(const ThetaState &theta, bool lambda_free) {
  const Eigen::Index q = theta.beta.size();
  Eigen::VectorXd v(q + 2 + (lambda_free ? 1 : 0));
  v.head(q) = theta.beta;
  v[q] = theta.sigma_e2;
  v[q + 1] = theta.sigma_s2;
  if (lambda_free) {
    v[q + 2] = theta.lambda;
  }
  return v;
}

inline ThetaState unpack_free(const Eigen::VectorXd &v, const ThetaState &like, bool lambda_free) {
  ThetaState theta = like;
  const Eigen::Index q = like.beta.size();
  theta.beta = v.head(q);
  theta.sigma_e2 = v[q];
  theta.sigma_s2 = v[q + 1];
  if (lambda_free) {
    theta.lambda = v[q + 2];
  }
  return theta;
}

/*
 * Standard errors from the observed information: the negated central
 * difference Hessian of the marginal log-likelihood at theta_hat, step
 * max(1e-4, 1e-4 |theta_k|) (kept inside the positive range for the
 * variances). Coordinates with a non-positive inverse-information
 * diagonal get NaN.
 */
inline Eigen::VectorXd standard_errors(const ThetaState &theta_hat, const Dataset &data, bool lambda_free,
                                       std::vector<std::string> *warnings = nullptr) {
  const Eigen::VectorXd center = pack_free(theta_hat, lambda_free);
  const Eigen::Index k = center.size();
  const Eigen::Index q = theta_hat.beta.size();
  const int pm = data.pm();

  Eigen::VectorXd h(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    h[i] = std::max(1e-4, 1e-4 * std::abs(center[i]));
    if (i == q || i == q + 1) {
      h[i] = std::min(h[i], 0.5 * center[i]);
    }
  }

  auto f = [&](const Eigen::VectorXd &v) {
    return marginal_loglik(unpack_free(v, theta_hat, lambda_free), data.subjects, pm);
  };
  const double f0 = f(center);
  Eigen::MatrixXd H(k, k);
  Eigen::VectorXd plus(k), minus(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    Eigen::VectorXd v = center;
    v[i] += h[i];
    plus[i] = f(v);
    v[i] = center[i] - h[i];
    minus[i] = f(v);
    H(i, i) = (plus[i] - 2.0 * f0 + minus[i]) / (h[i] * h[i]);
  }
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i + 1; j < k; ++j) {
      Eigen::VectorXd v = center;
      v[i] += h[i];
      v[j] += h[j];
      const double fpp = f(v);
      v[j] = center[j] - h[j];
      const double fpm = f(v);
      v[i] = center[i] - h[i];
      const double fmm = f(v);
      v[j] = center[j] + h[j];
      const double fmp = f(v);
      H(i, j) = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
      H(j, i) = H(i, j);
    }
  }

  const Eigen::MatrixXd info = -H;
  Eigen::VectorXd se = Eigen::VectorXd::Constant(k, std::numeric_limits<double>::quiet_NaN());
  if (Eigen::LLT<Eigen::MatrixXd>(info).info() != Eigen::Success && warnings != nullptr) {
    warnings->push_back("observed information is not positive definite; some standard errors are NaN");
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(info);
  if (!lu.isInvertible()) {
    if (warnings != nullptr) {
      warnings->push_back("observed information is singular; standard errors unavailable");
    }
    return se;
  }
  const Eigen::MatrixXd cov = lu.inverse();
  for (Eigen::Index i = 0; i < k; ++i) {
    if (cov(i, i) > 0.0 && std::isfinite(cov(i, i))) {
      se[i] = std::sqrt(cov(i, i));
    }
  }
  return se;
}

/*
 * EM fit. Each iteration runs the closed-form E-step, the exact beta
 * update and one safeguarded Newton-Raphson step on the variance
 * components, then stops once the largest absolute change over all free
 * parameters falls below `tolerance`. Non-convergence within max_iter is
 * reported through `converged`, not thrown.
 */
inline FitResult fit(const Dataset &data, Scenario scenario, const FitOptions &options = {}) {
  if (data.subjects.empty()) {
    throw DataError("fit: dataset has no subjects");
  }
  const int pm = data.pm();
  const FixedEffectIndex index(data.layout);
  const bool lambda_free = is_skewed(scenario) && !options.freeze_lambda;

  FitResult result;
  result.lambda_free = lambda_free;
  ThetaState theta;
  if (options.initial) {
    theta = *options.initial;
    theta.scenario = scenario;
    if (!is_skewed(scenario)) {
      theta.lambda = 0.0;
    }
  } else {
    theta = initialize(data, scenario, &result.warnings);
  }
  if (options.freeze_lambda && !options.initial) {
    theta.lambda = 0.0;
  }

  result.trajectory.push_back(marginal_loglik(theta, data.subjects, pm));
  for (int iter = 1; iter <= options.max_iter; ++iter) {
    const Covariance cov = assemble(theta, pm);
    const std::vector<EStepMoments> moments = e_step(cov, data.subjects, theta.beta);
    const Eigen::VectorXd beta = update_beta(data.subjects, cov, moments, index.names());
    const QStatistics st = make_q_statistics(data.subjects, beta, moments);
    const NrStep step = nr_step(theta.xi(), scenario, st, lambda_free);
    result.stalled_steps += step.stalled ? 1 : 0;

    double change = (beta - theta.beta).cwiseAbs().maxCoeff();
    change = std::max(change, (step.xi - theta.xi()).head(lambda_free ? 3 : 2).cwiseAbs().maxCoeff());
    theta.beta = beta;
    theta.set_xi(step.xi);
    result.trajectory.push_back(marginal_loglik(theta, data.subjects, pm));
    result.iterations = iter;
    if (lambda_free && std::abs(theta.lambda) > kLambdaDivergenceBound) {
      result.warnings.push_back("lambda diverging: the likelihood increases toward the half-normal boundary");
      break;
    }
    if (change < options.tolerance) {
      result.converged = true;
      break;
    }
  }

  result.theta = theta;
  result.loglik = result.trajectory.back();
  result.k = free_parameter_count(data.q(), scenario, options.freeze_lambda);
  result.n_obs = data.n_obs();
  const InformationCriteria ic = aic_bic(result.loglik, result.k, result.n_obs);
  result.aic = ic.aic;
  result.bic = ic.bic;
  result.corrected_intercept = corrected_intercept(theta);

  result.parameter_names = index.names();
  result.parameter_names.emplace_back("sigma_e2");
  result.parameter_names.emplace_back("sigma_s2");
  if (lambda_free) {
    result.parameter_names.emplace_back("lambda");
    if (std::abs(theta.lambda) < kLambdaSingularityBand) {
      result.warnings.push_back("|lambda| < 0.05: information is near-singular, lambda SE is unreliable");
    }
  }
  if (options.compute_standard_errors) {
    result.se = standard_errors(theta, data, lambda_free, &result.warnings);
  } else {
    result.se = Eigen::VectorXd::Constant(result.k, std::numeric_limits<double>::quiet_NaN());
  }
  if (!result.converged && result.iterations == options.max_iter) {
    result.warnings.push_back("EM did not converge within " + std::to_string(options.max_iter) + " iterations");
  }
  return result;
}

}  // namespace snxover

#endif  // SNXOVER_EM_HPP_
