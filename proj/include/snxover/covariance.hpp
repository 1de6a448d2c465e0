#ifndef SNXOVER_COVARIANCE_HPP_
#define SNXOVER_COVARIANCE_HPP_

#include <array>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "snxover/model.hpp"
#include "snxover/skew_normal.hpp"

namespace snxover {

class NotPositiveDefinite : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/*
 * Conditional covariance V and skew direction d of the hierarchical form
 *
 *   y | t ~ N(X beta + d t, V),   t ~ HN(0, 1),
 *
 * with Z = 1_pm. For skewed errors (skewness on coordinate 1):
 *   V = sigma_s^2 J + sigma_e^2 (I - delta^2 e1 e1'),  d = sigma_e delta e1.
 * For a skewed random intercept:
 *   V = sigma_s^2 (1 - delta^2) J + sigma_e^2 I,       d = sigma_s delta 1.
 * The normal baseline is either form at delta = 0.
 */
struct Covariance {
  Eigen::MatrixXd V;
  Eigen::MatrixXd Vinv;
  Eigen::VectorXd d;
  double logdet = 0.0;
};

inline double effective_lambda(Scenario scenario, double lambda) {
  return scenario == Scenario::NormalBaseline ? 0.0 : lambda;
}

inline Covariance assemble(const VarianceParams &xi, Scenario scenario, int pm) {
  const double se2 = xi[kSigmaE2];
  const double ss2 = xi[kSigmaS2];
  if (!(se2 > 0.0) || !(ss2 >= 0.0)) {
    throw NotPositiveDefinite("assemble: variance components must be positive");
  }
  const double delta = delta_of_lambda(effective_lambda(scenario, xi[kLambda]));
  const Eigen::MatrixXd J = Eigen::MatrixXd::Ones(pm, pm);

  Covariance cov;
  cov.d = Eigen::VectorXd::Zero(pm);
  if (scenario == Scenario::EffectSN) {
    cov.V = ss2 * (1.0 - delta * delta) * J + se2 * Eigen::MatrixXd::Identity(pm, pm);
    cov.d.setConstant(std::sqrt(ss2) * delta);
  } else {
    cov.V = ss2 * J + se2 * Eigen::MatrixXd::Identity(pm, pm);
    cov.V(0, 0) -= se2 * delta * delta;
    cov.d[0] = std::sqrt(se2) * delta;
  }

  Eigen::LLT<Eigen::MatrixXd> llt(cov.V);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("assemble: V is not positive definite");
  }
  cov.Vinv = llt.solve(Eigen::MatrixXd::Identity(pm, pm));
  cov.logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return cov;
}

inline Covariance assemble(const ThetaState &theta, int pm) { return assemble(theta.xi(), theta.scenario, pm); }

/// First and second partial derivatives of V and d with respect to
/// (sigma_e^2, sigma_s^2, lambda). Entries for a frozen lambda are zero.
struct CovarianceDerivatives {
  std::array<Eigen::MatrixXd, 3> dV;
  std::array<Eigen::VectorXd, 3> dd;
  std::array<std::array<Eigen::MatrixXd, 3>, 3> d2V;
  std::array<std::array<Eigen::VectorXd, 3>, 3> d2d;
};

inline CovarianceDerivatives covariance_derivatives(const VarianceParams &xi, Scenario scenario, int pm) {
  const double se2 = xi[kSigmaE2];
  const double ss2 = xi[kSigmaS2];
  const double lambda = effective_lambda(scenario, xi[kLambda]);
  const double delta = delta_of_lambda(lambda);
  const double dl = scenario == Scenario::NormalBaseline ? 0.0 : delta_prime(lambda);
  const double dll = scenario == Scenario::NormalBaseline ? 0.0 : delta_second(lambda);
  // R_l and R_ll: derivatives of (1 - delta^2) in lambda.
  const double r_l = -2.0 * delta * dl;
  const double r_ll = -2.0 * (delta * dll + dl * dl);

  const Eigen::MatrixXd zero_m = Eigen::MatrixXd::Zero(pm, pm);
  const Eigen::VectorXd zero_v = Eigen::VectorXd::Zero(pm);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(pm, pm);
  const Eigen::MatrixXd J = Eigen::MatrixXd::Ones(pm, pm);

  CovarianceDerivatives out;
  for (int a = 0; a < 3; ++a) {
    out.dV[a] = zero_m;
    out.dd[a] = zero_v;
    for (int b = 0; b < 3; ++b) {
      out.d2V[a][b] = zero_m;
      out.d2d[a][b] = zero_v;
    }
  }

  auto set_pair = [&out](int a, int b, const Eigen::MatrixXd &m, const Eigen::VectorXd &v) {
    out.d2V[a][b] = m;
    out.d2V[b][a] = m;
    out.d2d[a][b] = v;
    out.d2d[b][a] = v;
  };

  if (scenario == Scenario::EffectSN) {
    const double ss = std::sqrt(ss2);
    const Eigen::VectorXd one = Eigen::VectorXd::Ones(pm);
    out.dV[kSigmaE2] = I;
    out.dV[kSigmaS2] = (1.0 - delta * delta) * J;
    out.dV[kLambda] = ss2 * r_l * J;
    out.dd[kSigmaS2] = delta / (2.0 * ss) * one;
    out.dd[kLambda] = ss * dl * one;
    set_pair(kSigmaS2, kSigmaS2, zero_m, -delta / (4.0 * ss2 * ss) * one);
    set_pair(kSigmaS2, kLambda, r_l * J, dl / (2.0 * ss) * one);
    set_pair(kLambda, kLambda, ss2 * r_ll * J, ss * dll * one);
  } else {
    const double se = std::sqrt(se2);
    Eigen::MatrixXd R = I;
    R(0, 0) -= delta * delta;
    Eigen::MatrixXd R_l = zero_m;
    R_l(0, 0) = r_l;
    Eigen::MatrixXd R_ll = zero_m;
    R_ll(0, 0) = r_ll;
    Eigen::VectorXd e1 = zero_v;
    e1[0] = 1.0;

    out.dV[kSigmaE2] = R;
    out.dV[kSigmaS2] = J;
    out.dV[kLambda] = se2 * R_l;
    out.dd[kSigmaE2] = delta / (2.0 * se) * e1;
    out.dd[kLambda] = se * dl * e1;
    set_pair(kSigmaE2, kSigmaE2, zero_m, -delta / (4.0 * se2 * se) * e1);
    set_pair(kSigmaE2, kLambda, R_l, dl / (2.0 * se) * e1);
    set_pair(kLambda, kLambda, se2 * R_ll, se * dll * e1);
  }
  return out;
}

}  // namespace snxover

#endif  // SNXOVER_COVARIANCE_HPP_
