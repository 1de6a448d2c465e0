#include <algorithm>
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "test_support.hpp"

namespace snxover {
namespace {

using testing::integrate;
using testing::make_layout;
using testing::study_dataset;
using testing::study_truth;

ThetaState scalar_theta(double beta0, double se2, double ss2, double lambda, Scenario scenario) {
  ThetaState t;
  t.beta = Eigen::VectorXd::Constant(1, beta0);
  t.sigma_e2 = se2;
  t.sigma_s2 = ss2;
  t.lambda = lambda;
  t.scenario = scenario;
  return t;
}

Subject subject(Eigen::VectorXd y, Eigen::MatrixXd X) {
  Subject s;
  s.y = std::move(y);
  s.X = std::move(X);
  return s;
}

// ---- marginal log-likelihood ----------------------------------------------

TEST(MarginalLoglik, ScalarStandardNormal) {
  const std::vector<Subject> one = {subject(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Ones(1, 1))};
  EXPECT_NEAR(marginal_loglik(scalar_theta(0.0, 0.5, 0.5, 0.0, Scenario::ErrorSN), one, 1), -0.918938533204673,
              1e-14);
}

TEST(MarginalLoglik, NormalCaseIsMultivariateNormal) {
  const Dataset data = study_dataset(Scenario::NormalBaseline, 0);
  ThetaState t = study_truth(Scenario::NormalBaseline);
  t.sigma_e2 = 1.4;
  t.sigma_s2 = 0.8;
  const Eigen::MatrixXd sigma =
      t.sigma_s2 * Eigen::MatrixXd::Ones(12, 12) + t.sigma_e2 * Eigen::MatrixXd::Identity(12, 12);
  const Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  double expected = 0.0;
  for (const auto &s : data.subjects) {
    const Eigen::VectorXd r = s.y - s.X * t.beta;
    expected += -0.5 * (12 * std::log(2 * std::numbers::pi) + logdet + r.dot(llt.solve(r)));
  }
  EXPECT_NEAR(marginal_loglik(t, data.subjects, 12), expected, 1e-9 * std::abs(expected));
}

TEST(MarginalLoglik, MatchesIntegralOverLatentHalfNormal) {
  // f(y) = int_0^inf 2 phi(t) N(y; mu + d t, V) dt, evaluated by quadrature.
  for (Scenario scenario : {Scenario::ErrorSN, Scenario::EffectSN}) {
    const int pm = 4;
    ThetaState t;
    t.scenario = scenario;
    t.beta = Eigen::VectorXd::Constant(1, 0.3);
    t.sigma_e2 = 1.2;
    t.sigma_s2 = 0.7;
    t.lambda = -2.5;
    const Covariance cov = assemble(t, pm);
    const Eigen::Vector4d y(0.1, -1.3, 0.9, 2.2);
    const Eigen::MatrixXd X = Eigen::MatrixXd::Ones(pm, 1);
    auto integrand = [&](double tt) {
      const Eigen::VectorXd r = y - X * t.beta - cov.d * tt;
      return 2.0 * normal_pdf(tt) *
             std::exp(-0.5 * (pm * std::log(2 * std::numbers::pi) + cov.logdet + r.dot(cov.Vinv * r)));
    };
    const double f = integrate(integrand, 0.0, 40.0, 2.0);
    EXPECT_NEAR(marginal_loglik(t, {subject(y, X)}, pm), std::log(f), 1e-9);
  }
}

TEST(MarginalLoglik, AverageMatchesNegativeEntropy) {
  // pm = 1 error model is SN(beta, sigma_s^2 + sigma_e^2, lambda*) for some
  // shape; compare the sample average of log f with -H computed by
  // quadrature of f log f.
  const ThetaState t = scalar_theta(0.5, 1.5, 0.4, 3.0, Scenario::ErrorSN);
  const std::vector<Subject> probe = {subject(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Ones(1, 1))};
  auto log_f = [&](double y) {
    std::vector<Subject> s = {subject(Eigen::VectorXd::Constant(1, y), Eigen::MatrixXd::Ones(1, 1))};
    return marginal_loglik(t, s, 1);
  };
  const double neg_entropy = integrate([&](double y) { return std::exp(log_f(y)) * log_f(y); }, -20.0, 20.0, 0.5);
  RngStream rng(17);
  const int n = 100000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double y = 0.5 + std::sqrt(0.4) * rng.normal() + sn_sample({0.0, 1.5, 3.0}, rng);
    const double l = log_f(y);
    sum += l;
    sum2 += l * l;
  }
  const double mean = sum / n;
  const double mc_se = std::sqrt((sum2 / n - mean * mean) / n);
  EXPECT_NEAR(mean, neg_entropy, 4.0 * mc_se);
}

TEST(AicBic, Values) {
  const InformationCriteria zero = aic_bic(0.0, 0, 10);
  EXPECT_EQ(zero.aic, 0.0);
  EXPECT_EQ(zero.bic, 0.0);
  EXPECT_NEAR(aic_bic(293.82, 17, 360).aic, -553.64, 1e-10);
  EXPECT_NEAR(aic_bic(293.82, 17, 360).bic, 17 * std::log(360.0) - 587.64, 1e-10);
  for (int k = 1; k < 20; ++k) {
    EXPECT_GT(aic_bic(-100.0, k + 1, 50).aic, aic_bic(-100.0, k, 50).aic);
    EXPECT_GT(aic_bic(-100.0, k + 1, 50).bic, aic_bic(-100.0, k, 50).bic);
    EXPECT_GE(aic_bic(-100.0, k, 8).bic, aic_bic(-100.0, k, 8).aic);
  }
}

TEST(MarginalLoglik, FittedValueIsLocalMaximum) {
  const Dataset data = study_dataset(Scenario::EffectSN, 0);
  FitOptions opt;
  opt.tolerance = 1e-9;
  opt.max_iter = 10000;
  opt.compute_standard_errors = false;
  const FitResult res = fit(data, Scenario::EffectSN, opt);
  ASSERT_TRUE(res.converged);
  const Eigen::VectorXd center = pack_free(res.theta, true);
  for (Eigen::Index k = 0; k < center.size(); ++k) {
    for (double step : {-1e-3, 1e-3}) {
      Eigen::VectorXd v = center;
      v[k] += step;
      EXPECT_LE(marginal_loglik(unpack_free(v, res.theta, true), data.subjects, 12), res.loglik + 1e-8) << k;
    }
  }
}

// ---- Mahalanobis distances and KS ------------------------------------------

TEST(Mahalanobis, TrivialCases) {
  ThetaState t;
  t.scenario = Scenario::ErrorSN;
  t.beta = Eigen::VectorXd::Zero(1);
  t.sigma_e2 = 1.0;
  t.sigma_s2 = 0.0;
  t.lambda = 3.0;  // V = I - delta^2 e1 e1', d = delta e1, so Sigma = I
  const Eigen::MatrixXd X = Eigen::MatrixXd::Ones(5, 1);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(5);
  y[0] = 3.0;
  y[1] = 4.0;
  EXPECT_NEAR(mahalanobis(t, {subject(y, X)}, 5)[0], 25.0, 1e-12);
  t.beta[0] = 2.0;
  EXPECT_NEAR(mahalanobis(t, {subject(Eigen::VectorXd::Constant(5, 2.0), X)}, 5)[0], 0.0, 1e-14);
}

TEST(Mahalanobis, AgreesWithDenseSigma) {
  const Dataset data = study_dataset(Scenario::EffectSN, 3);
  const ThetaState t = study_truth(Scenario::EffectSN);
  const Covariance cov = assemble(t, 12);
  const Eigen::MatrixXd sigma_inv = (cov.V + cov.d * cov.d.transpose()).inverse();
  const std::vector<double> d = mahalanobis(t, data);
  for (std::size_t i = 0; i < 5; ++i) {
    const Eigen::VectorXd r = data.subjects[i].y - data.subjects[i].X * t.beta;
    EXPECT_NEAR(d[i], r.dot(sigma_inv * r), 1e-9);
  }
}

TEST(KsTest, PlugInCases) {
  const double median = chi2_quantile(0.5, 7);
  EXPECT_NEAR(ks_test({median}, 7).statistic, 0.5, 1e-12);
  for (int n : {1, 5, 40}) {
    std::vector<double> q;
    for (int i = 1; i <= n; ++i) {
      q.push_back(chi2_quantile((i - 0.5) / n, 12));
    }
    std::reverse(q.begin(), q.end());
    EXPECT_NEAR(ks_test(q, 12).statistic, 0.5 / n, 1e-10);
  }
  EXPECT_THROW(ks_test({}, 3), std::invalid_argument);
}

TEST(KsTest, InvariantUnderProbabilityIntegralTransform) {
  RngStream rng(4);
  std::vector<double> d(200), u(200);
  for (std::size_t i = 0; i < d.size(); ++i) {
    double s = 0.0;
    for (int k = 0; k < 10; ++k) {
      const double z = rng.normal();
      s += z * z;
    }
    d[i] = s * 1.1;  // slightly misspecified on purpose
    u[i] = chi2_cdf(d[i], 10);
  }
  std::sort(u.begin(), u.end());
  double against_uniform = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    against_uniform = std::max({against_uniform, (i + 1.0) / 200.0 - u[i], u[i] - i / 200.0});
  }
  EXPECT_NEAR(ks_test(d, 10).statistic, against_uniform, 1e-14);
}

TEST(KsTest, SmallSampleCalibration) {
  RngStream rng(2718);
  int accepted = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> d(12);
    for (double &v : d) {
      v = 0.0;
      for (int k = 0; k < 30; ++k) {
        const double z = rng.normal();
        v += z * z;
      }
    }
    accepted += ks_test(d, 30).pvalue > 0.05 ? 1 : 0;
  }
  EXPECT_GE(accepted, 900);
}

// ---- Healy points and residuals -------------------------------------------

TEST(HealyPoints, IdentityAndZeros) {
  std::vector<double> q;
  for (int i = 1; i <= 25; ++i) {
    q.push_back(chi2_quantile((i - 0.5) / 25, 6));
  }
  const auto pts = healy_points(q, 6);
  ASSERT_EQ(pts.size(), 25u);
  for (const auto &[nominal, empirical] : pts) {
    EXPECT_NEAR(nominal, empirical, 1e-10);
  }
  for (const auto &[nominal, empirical] : healy_points(std::vector<double>(4, 0.0), 6)) {
    EXPECT_EQ(empirical, 0.0);
    EXPECT_GE(nominal, 0.0);
  }
}

TEST(HealyPoints, WellFittedStudyData) {
  const Dataset data = study_dataset(Scenario::ErrorSN, 4);
  const FitResult res = fit(data, Scenario::ErrorSN);
  const GofReport gof = goodness_of_fit(res.theta, data);
  EXPECT_EQ(gof.df, 12);
  EXPECT_EQ(gof.healy_points.size(), 90u);
  EXPECT_LT(healy_sup_deviation(gof.healy_points), 0.15);
  double prev_x = 0.0, prev_y = 0.0;
  for (const auto &[x, y] : gof.healy_points) {
    EXPECT_GE(x, prev_x);
    EXPECT_GE(y, prev_y);
    EXPECT_LE(x, 1.0);
    EXPECT_LE(y, 1.0);
    prev_x = x;
    prev_y = y;
  }
}

TEST(StandardizedResiduals, NormalCaseIsMarginalResidual) {
  const Dataset data = study_dataset(Scenario::NormalBaseline, 0);
  const ThetaState t = study_truth(Scenario::NormalBaseline);
  const auto resid = standardized_residuals(t, data);
  const double scale = std::sqrt(t.sigma_e2 + t.sigma_s2);
  for (std::size_t i = 0; i < 3; ++i) {
    const Eigen::VectorXd expected = (data.subjects[i].y - data.subjects[i].X * t.beta) / scale;
    EXPECT_TRUE(resid[i].isApprox(expected, 1e-12));
  }
}

TEST(StandardizedResiduals, ExactFitGivesZero) {
  const ThetaState t = study_truth(Scenario::ErrorSN);
  Dataset data = study_dataset(Scenario::ErrorSN, 0);
  data.subjects.resize(1);
  const Covariance cov = assemble(t, 12);
  // y = X beta + d T01 is a fixed point: its residual d'V^-1 r feeds T01.
  // Solve the scalar equation T01(c) = c for y = X beta + d c.
  const Eigen::VectorXd vinv_d = cov.Vinv * cov.d;
  const double cc = cov.d.dot(vinv_d);
  double c = 1.0;
  for (int i = 0; i < 200; ++i) {
    c = truncated_normal_moments(cc * c / (1.0 + cc), 1.0 / (1.0 + cc)).t01;
  }
  data.subjects[0].y = data.subjects[0].X * t.beta + cov.d * c;
  const auto resid = standardized_residuals(t, data);
  EXPECT_LT(resid[0].cwiseAbs().maxCoeff(), 1e-10);
}

TEST(StandardizedResiduals, PooledMomentsOnLargeSimulation) {
  const ThetaState t = study_truth(Scenario::ErrorSN);
  RngStream rng(99);
  const Dataset data = simulate_dataset(latin_square_3x3_layout(1000, 4), t, rng);
  double sum = 0.0, sum2 = 0.0;
  long count = 0;
  for (const auto &r : standardized_residuals(t, data)) {
    sum += r.sum();
    sum2 += r.squaredNorm();
    count += r.size();
  }
  const double mean = sum / count;
  EXPECT_NEAR(mean, 0.0, 0.05);
  const double var = sum2 / count - mean * mean;
  EXPECT_GE(var, 0.85);
  EXPECT_LE(var, 1.15);
}

TEST(PlotRows, KindsAndCounts) {
  const Dataset data = study_dataset(Scenario::ErrorSN, 0);
  const ThetaState t = study_truth(Scenario::ErrorSN);
  const GofReport gof = goodness_of_fit(t, data);
  const auto rows = plot_rows(t, data, gof);
  auto count = [&](const std::string &kind) {
    return std::count_if(rows.begin(), rows.end(), [&](const PlotRow &r) { return r.kind == kind; });
  };
  EXPECT_EQ(count("healy"), 90);
  EXPECT_EQ(count("qq_chisq"), 90);
  EXPECT_EQ(count("resid_fitted"), 1080);
  EXPECT_EQ(rows.size(), 1260u);
}

}  // namespace
}  // namespace snxover
