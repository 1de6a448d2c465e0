#ifndef SNXOVER_DIAGNOSTICS_HPP_
#define SNXOVER_DIAGNOSTICS_HPP_

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "snxover/covariance.hpp"
#include "snxover/likelihood.hpp"
#include "snxover/model.hpp"
#include "snxover/special_functions.hpp"

namespace snxover {

/*
 * Squared Mahalanobis distance of each subject about its location X beta
 * under the marginal covariance Sigma = V + d d'. By Sherman-Morrison,
 *
 *   r' Sigma^-1 r = r' V^-1 r - (d' V^-1 r)^2 / (1 + d' V^-1 d).
 *
 * For a skew-normal vector this quadratic form is chi-square with pm
 * degrees of freedom, whatever the shape.
 */
inline std::vector<double> mahalanobis(const ThetaState &theta, const std::vector<Subject> &subjects, int pm) {
  const Covariance cov = assemble(theta, pm);
  const Eigen::VectorXd vinv_d = cov.Vinv * cov.d;
  const double c = cov.d.dot(vinv_d);
  std::vector<double> out;
  out.reserve(subjects.size());
  for (const auto &s : subjects) {
    const Eigen::VectorXd r = s.y - s.X * theta.beta;
    const double proj = vinv_d.dot(r);
    out.push_back(std::max(0.0, r.dot(cov.Vinv * r) - proj * proj / (1.0 + c)));
  }
  return out;
}

inline std::vector<double> mahalanobis(const ThetaState &theta, const Dataset &data) {
  return mahalanobis(theta, data.subjects, data.pm());
}

struct KsResult {
  double statistic = 0.0;
  double pvalue = 1.0;
};

/// One-sample Kolmogorov-Smirnov test of `values` against chi-square(df).
/// The p-value is the asymptotic Kolmogorov tail at sqrt(n) D.
inline KsResult ks_test(std::vector<double> values, int df) {
  if (values.empty()) {
    throw std::invalid_argument("ks_test: no values");
  }
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double d = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double f = chi2_cdf(values[i], df);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return {d, kolmogorov_sf(std::sqrt(n) * d)};
}

/// Healy-type plot coordinates: ((i - 0.5)/n, F(d_(i))) for the sorted
/// distances. A correct model puts them on the unit-slope line.
inline std::vector<std::pair<double, double>> healy_points(std::vector<double> distances, int df) {
  std::sort(distances.begin(), distances.end());
  const double n = static_cast<double>(distances.size());
  std::vector<std::pair<double, double>> points;
  points.reserve(distances.size());
  for (std::size_t i = 0; i < distances.size(); ++i) {
    points.emplace_back((static_cast<double>(i) + 0.5) / n, chi2_cdf(distances[i], df));
  }
  return points;
}

inline double healy_sup_deviation(const std::vector<std::pair<double, double>> &points) {
  double sup = 0.0;
  for (const auto &[nominal, empirical] : points) {
    sup = std::max(sup, std::abs(nominal - empirical));
  }
  return sup;
}

/// Conditional residuals y - X beta - d T01, each coordinate divided by
/// sqrt(V_kk). `fitted` receives X beta + d T01 when non-null.
inline std::vector<Eigen::VectorXd> standardized_residuals(const ThetaState &theta, const Dataset &data,
                                                           std::vector<Eigen::VectorXd> *fitted = nullptr) {
  const Covariance cov = assemble(theta, data.pm());
  const std::vector<EStepMoments> moments = e_step(cov, data.subjects, theta.beta);
  const Eigen::ArrayXd scale = cov.V.diagonal().array().sqrt();
  std::vector<Eigen::VectorXd> out;
  out.reserve(data.subjects.size());
  if (fitted != nullptr) {
    fitted->clear();
  }
  for (std::size_t i = 0; i < data.subjects.size(); ++i) {
    const auto &s = data.subjects[i];
    const Eigen::VectorXd mean = s.X * theta.beta + cov.d * moments[i].t01;
    out.emplace_back(((s.y - mean).array() / scale).matrix());
    if (fitted != nullptr) {
      fitted->push_back(mean);
    }
  }
  return out;
}

struct GofReport {
  std::vector<double> distances;
  int df = 0;
  double ks_statistic = 0.0;
  double ks_pvalue = 1.0;
  std::vector<std::pair<double, double>> healy_points;
};

inline GofReport goodness_of_fit(const ThetaState &theta, const Dataset &data) {
  GofReport report;
  report.df = data.pm();
  report.distances = mahalanobis(theta, data);
  const KsResult ks = ks_test(report.distances, report.df);
  report.ks_statistic = ks.statistic;
  report.ks_pvalue = ks.pvalue;
  report.healy_points = healy_points(report.distances, report.df);
  return report;
}

struct PlotRow {
  std::string kind;
  long index = 0;
  double x = 0.0;
  double y = 0.0;
};

/*
 * Plot data for external rendering:
 *   healy         nominal probability vs chi-square CDF of d_(i)
 *   qq_chisq      chi-square quantile at (i - 0.5)/n vs d_(i)
 *   resid_fitted  conditional fitted value vs standardized residual
 * Indices are 1-based within each kind.
 */
inline std::vector<PlotRow> plot_rows(const ThetaState &theta, const Dataset &data, const GofReport &report) {
  std::vector<PlotRow> rows;
  long index = 1;
  for (const auto &[nominal, empirical] : report.healy_points) {
    rows.push_back({"healy", index++, nominal, empirical});
  }
  std::vector<double> sorted = report.distances;
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  index = 1;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    rows.push_back({"qq_chisq", index++, chi2_quantile((static_cast<double>(i) + 0.5) / n, report.df), sorted[i]});
  }
  std::vector<Eigen::VectorXd> fitted;
  const std::vector<Eigen::VectorXd> resid = standardized_residuals(theta, data, &fitted);
  index = 1;
  for (std::size_t i = 0; i < resid.size(); ++i) {
    for (Eigen::Index k = 0; k < resid[i].size(); ++k) {
      rows.push_back({"resid_fitted", index++, fitted[i][k], resid[i][k]});
    }
  }
  return rows;
}

}  // namespace snxover

#endif  // SNXOVER_DIAGNOSTICS_HPP_
