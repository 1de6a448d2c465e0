#ifndef SNXOVER_Q_FUNCTION_HPP_
#define SNXOVER_Q_FUNCTION_HPP_

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "snxover/covariance.hpp"
#include "snxover/likelihood.hpp"
#include "snxover/model.hpp"

namespace snxover {

class RankDeficientError : public std::runtime_error {
 public:
  RankDeficientError(const std::string &what, std::vector<int> columns)
      : std::runtime_error(what), dependent_columns(std::move(columns)) {}
  std::vector<int> dependent_columns;
};

/// Generalized least squares step of the M-step:
///   beta = (sum X' V^-1 X)^-1 sum X' V^-1 (y - d T01).
inline Eigen::VectorXd update_beta(const std::vector<Subject> &subjects, const Covariance &cov,
                                   const std::vector<EStepMoments> &moments,
                                   const std::vector<std::string> &column_names = {}) {
  const Eigen::Index q = subjects.front().X.cols();
  Eigen::MatrixXd lhs = Eigen::MatrixXd::Zero(q, q);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(q);
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const auto &s = subjects[i];
    const Eigen::MatrixXd xt_vinv = s.X.transpose() * cov.Vinv;
    lhs.noalias() += xt_vinv * s.X;
    rhs.noalias() += xt_vinv * (s.y - cov.d * moments[i].t01);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(lhs);
  qr.setThreshold(1e-10);
  if (qr.rank() < q) {
    std::vector<int> dependent;
    std::string names;
    for (Eigen::Index k = qr.rank(); k < q; ++k) {
      const int col = static_cast<int>(qr.colsPermutation().indices()[k]);
      dependent.push_back(col);
      if (!names.empty()) {
        names += ", ";
      }
      names += col < static_cast<int>(column_names.size()) ? column_names[static_cast<std::size_t>(col)]
                                                           : "column " + std::to_string(col);
    }
    throw RankDeficientError("fixed-effects normal equations are singular; dependent columns: " + names,
                             std::move(dependent));
  }
  return qr.solve(rhs);
}

/*
 * Sufficient statistics of the Q-function in the variance components. With
 * residuals r_i = y_i - X_i beta held fixed and the E-step moments frozen,
 *
 *   Q = -1/2 [ n log|V| + sum T02 (1 + d'V^-1 d)
 *              + tr(V^-1 S_rr) - 2 d'V^-1 s_rt ],
 *
 * S_rr = sum r r', s_rt = sum T01 r. Every evaluation after this is
 * independent of the number of subjects.
 */
struct QStatistics {
  long n = 0;
  Eigen::MatrixXd S_rr;
  Eigen::VectorXd s_rt;
  double sum_t02 = 0.0;
};

inline QStatistics make_q_statistics(const std::vector<Subject> &subjects, const Eigen::VectorXd &beta,
                                     const std::vector<EStepMoments> &moments) {
  const Eigen::Index pm = subjects.front().y.size();
  QStatistics st;
  st.n = static_cast<long>(subjects.size());
  st.S_rr = Eigen::MatrixXd::Zero(pm, pm);
  st.s_rt = Eigen::VectorXd::Zero(pm);
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const Eigen::VectorXd r = subjects[i].y - subjects[i].X * beta;
    st.S_rr.selfadjointView<Eigen::Lower>().rankUpdate(r);
    st.s_rt += moments[i].t01 * r;
    st.sum_t02 += moments[i].t02;
  }
  st.S_rr = st.S_rr.selfadjointView<Eigen::Lower>();
  return st;
}

inline double q_value(const VarianceParams &xi, Scenario scenario, const QStatistics &st) {
  const Covariance cov = assemble(xi, scenario, static_cast<int>(st.s_rt.size()));
  const Eigen::VectorXd vinv_d = cov.Vinv * cov.d;
  return -0.5 * (static_cast<double>(st.n) * cov.logdet + st.sum_t02 * (1.0 + cov.d.dot(vinv_d)) +
                 (cov.Vinv.cwiseProduct(st.S_rr)).sum() - 2.0 * vinv_d.dot(st.s_rt));
}

/// Gradient of q_value in (sigma_e^2, sigma_s^2, lambda), T01/T02 fixed.
/// The lambda component is zero for the normal baseline.
inline Eigen::Vector3d q_gradient(const VarianceParams &xi, Scenario scenario, const QStatistics &st) {
  const int pm = static_cast<int>(st.s_rt.size());
  const Covariance cov = assemble(xi, scenario, pm);
  const CovarianceDerivatives der = covariance_derivatives(xi, scenario, pm);
  const Eigen::MatrixXd &A = cov.Vinv;
  const Eigen::VectorXd &d = cov.d;
  const double n = static_cast<double>(st.n);

  Eigen::Vector3d g;
  for (int k = 0; k < 3; ++k) {
    const Eigen::MatrixXd A_k = -A * der.dV[k] * A;
    const double trace_term = n * (A.cwiseProduct(der.dV[k])).sum();
    const double t02_term = st.sum_t02 * (d.dot(A_k * d) + 2.0 * der.dd[k].dot(A * d));
    const double rr_term = (A_k.cwiseProduct(st.S_rr)).sum();
    const double rt_term = -2.0 * (st.s_rt.dot(A_k * d) + st.s_rt.dot(A * der.dd[k]));
    g[k] = -0.5 * (trace_term + t02_term + rr_term + rt_term);
  }
  if (scenario == Scenario::NormalBaseline) {
    g[kLambda] = 0.0;
  }
  return g;
}

/*
 * Hessian of q_value. Second derivative of V^-1:
 *
 *   A_ab = A V_b A V_a A + A V_a A V_b A - A V_ab A.
 *
 * The symmetric form matters for the bilinear terms in s_rt and d, which
 * are not quadratic forms in a single vector.
 */
inline Eigen::Matrix3d q_hessian(const VarianceParams &xi, Scenario scenario, const QStatistics &st) {
  const int pm = static_cast<int>(st.s_rt.size());
  const Covariance cov = assemble(xi, scenario, pm);
  const CovarianceDerivatives der = covariance_derivatives(xi, scenario, pm);
  const Eigen::MatrixXd &A = cov.Vinv;
  const Eigen::VectorXd &d = cov.d;
  const double n = static_cast<double>(st.n);

  std::array<Eigen::MatrixXd, 3> A_k;
  std::array<Eigen::MatrixXd, 3> AV_k;
  for (int k = 0; k < 3; ++k) {
    AV_k[k] = A * der.dV[k];
    A_k[k] = -AV_k[k] * A;
  }

  Eigen::Matrix3d H;
  for (int a = 0; a < 3; ++a) {
    for (int b = a; b < 3; ++b) {
      const Eigen::MatrixXd A_ab =
          AV_k[b] * AV_k[a] * A + AV_k[a] * AV_k[b] * A - A * der.d2V[a][b] * A;
      const Eigen::VectorXd &d_a = der.dd[a];
      const Eigen::VectorXd &d_b = der.dd[b];
      const Eigen::VectorXd &d_ab = der.d2d[a][b];

      const double trace_term = n * ((A_k[b].cwiseProduct(der.dV[a])).sum() + (A.cwiseProduct(der.d2V[a][b])).sum());
      const double t02_term = st.sum_t02 * (d.dot(A_ab * d) + 2.0 * d_b.dot(A_k[a] * d) + 2.0 * d_a.dot(A_k[b] * d) +
                                            2.0 * d_ab.dot(A * d) + 2.0 * d_a.dot(A * d_b));
      const double rr_term = (A_ab.cwiseProduct(st.S_rr)).sum();
      const double rt_term = -2.0 * (st.s_rt.dot(A_ab * d) + st.s_rt.dot(A_k[a] * d_b) + st.s_rt.dot(A_k[b] * d_a) +
                                     st.s_rt.dot(A * d_ab));
      H(a, b) = -0.5 * (trace_term + t02_term + rr_term + rt_term);
      H(b, a) = H(a, b);
    }
  }
  return H;
}

}  // namespace snxover

#endif  // SNXOVER_Q_FUNCTION_HPP_
