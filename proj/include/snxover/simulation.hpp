#ifndef SNXOVER_SIMULATION_HPP_
#define SNXOVER_SIMULATION_HPP_

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "snxover/design.hpp"
#include "snxover/em.hpp"
#include "snxover/model.hpp"
#include "snxover/random.hpp"
#include "snxover/skew_normal.hpp"

namespace snxover {

struct SimConfig {
  Scenario scenario = Scenario::ErrorSN;
  int n_per_seq = 30;
  int replicates = 50;
  std::uint64_t seed = 42;
  ThetaState true_theta;
  CrossoverLayout layout;
  int workers = 1;
  FitOptions fit_options;
};

/*
 * Generating values of the Monte Carlo study: a 3x3 Latin square with four
 * responses per period and the block covariate w, fixed effects
 * (2.1 | 3.3, 2.4, 1.1, 0.9, 2.1, 1.5, 2.0, 3.4, 1.8) and
 *   skewed errors:          sigma_e^2 = 2,    sigma_s^2 = 0.64, lambda_e = 3
 *   skewed random effect:   sigma_e^2 = 0.72, sigma_s^2 = 3,    lambda_s = 4
 * The intercept is 2.1 for the error case and 3.3 for the effect case.
 */
inline SimConfig default_sim_config(Scenario scenario, int n_per_seq = 30, int replicates = 50,
                                    std::uint64_t seed = 42) {
  SimConfig config;
  config.scenario = scenario;
  config.n_per_seq = n_per_seq;
  config.replicates = replicates;
  config.seed = seed;
  config.layout = latin_square_3x3_layout(n_per_seq, 4);

  ThetaState truth;
  truth.scenario = scenario;
  truth.beta.resize(9);
  truth.beta << 2.1, 2.4, 1.1, 0.9, 2.1, 1.5, 2.0, 3.4, 1.8;
  if (scenario == Scenario::EffectSN) {
    truth.beta[0] = 3.3;
    truth.sigma_e2 = 0.72;
    truth.sigma_s2 = 3.0;
    truth.lambda = 4.0;
  } else {
    truth.sigma_e2 = 2.0;
    truth.sigma_s2 = 0.64;
    truth.lambda = scenario == Scenario::ErrorSN ? 3.0 : 0.0;
  }
  config.true_theta = truth;
  return config;
}

/// Draws one subject's response vector y = X beta + 1 b + e under theta.
/// The random effect is drawn before the error vector.
inline Eigen::VectorXd draw_response(const Eigen::MatrixXd &X, const ThetaState &theta, RngStream &rng) {
  const Eigen::Index pm = X.rows();
  double b = 0.0;
  Eigen::VectorXd e(pm);
  switch (theta.scenario) {
    case Scenario::EffectSN:
      b = sn_sample({0.0, theta.sigma_s2, theta.lambda}, rng);
      for (Eigen::Index k = 0; k < pm; ++k) {
        e[k] = std::sqrt(theta.sigma_e2) * rng.normal();
      }
      break;
    case Scenario::ErrorSN:
      b = std::sqrt(theta.sigma_s2) * rng.normal();
      e = sn_sample_vector({Eigen::VectorXd::Zero(pm), theta.sigma_e2, theta.lambda, 0}, rng);
      break;
    case Scenario::NormalBaseline:
      b = std::sqrt(theta.sigma_s2) * rng.normal();
      for (Eigen::Index k = 0; k < pm; ++k) {
        e[k] = std::sqrt(theta.sigma_e2) * rng.normal();
      }
      break;
  }
  return X * theta.beta + Eigen::VectorXd::Constant(pm, b) + e;
}

/// Simulates every subject of `layout` under theta. The only covariate a
/// generated layout may declare is the block covariate "w".
inline Dataset simulate_dataset(const CrossoverLayout &layout, const ThetaState &theta, RngStream &rng) {
  for (const auto &c : layout.covariates) {
    if (c != "w") {
      throw DataError("simulate_dataset: cannot generate values for covariate '" + c + "'");
    }
  }
  Dataset data;
  data.layout = layout;
  data.warnings = layout.validate();
  data.subjects.reserve(static_cast<std::size_t>(layout.total_subjects()));
  for (int i = 1; i <= layout.sequences; ++i) {
    const int n_i = layout.n_per_seq[static_cast<std::size_t>(i - 1)];
    for (int j = 1; j <= n_i; ++j) {
      std::map<std::string, double> covariates;
      if (!layout.covariates.empty()) {
        covariates["w"] = covariate_w(n_i, j);
      }
      Subject s;
      s.sequence = i;
      s.id = j;
      s.X = build_design(layout, i, j, covariates).X;
      s.y = draw_response(s.X, theta, rng);
      s.covariates = std::move(covariates);
      data.subjects.push_back(std::move(s));
    }
  }
  return data;
}

/// Replicate `replicate_index` of the study; its stream depends only on
/// (seed, replicate_index).
inline Dataset generate_dataset(const SimConfig &config, std::uint64_t replicate_index) {
  RngStream rng = RngStream(config.seed).split(replicate_index);
  return simulate_dataset(config.layout, config.true_theta, rng);
}

struct ModelFitRecord {
  bool ok = false;
  bool converged = false;
  Eigen::VectorXd estimates;  // beta..., sigma_e2, sigma_s2, lambda (NaN when not estimated)
  Eigen::VectorXd se;         // same layout
  double corrected_intercept = std::numeric_limits<double>::quiet_NaN();
  double loglik = std::numeric_limits<double>::quiet_NaN();
  double aic = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  std::string error;
};

struct ReplicateRecord {
  std::uint64_t index = 0;
  ModelFitRecord sn;
  ModelFitRecord normal;
};

struct ParameterSummary {
  std::string name;
  double truth = 0.0;
  double mean_estimate = 0.0;
  double mean_se = 0.0;
  double mean_abs_bias = 0.0;
  /// Spread of the estimates across replicates, and its MC error of the mean.
  double sd_estimate = 0.0;
  double mc_se = 0.0;
};

struct ModelSummary {
  Scenario model = Scenario::NormalBaseline;
  int replicates_converged = 0;
  double mean_iterations = 0.0;
  std::vector<ParameterSummary> parameters;
};

struct McSummary {
  Scenario scenario = Scenario::ErrorSN;
  int replicates = 0;
  ModelSummary sn;
  ModelSummary normal;
  double sn_selected_rate = 0.0;
  int selection_pairs = 0;
  std::vector<ReplicateRecord> records;
};

inline std::vector<std::string> summary_parameter_names(const CrossoverLayout &layout) {
  std::vector<std::string> names = FixedEffectIndex(layout).names();
  names.emplace_back("sigma_e2");
  names.emplace_back("sigma_s2");
  names.emplace_back("lambda");
  return names;
}

inline ModelFitRecord record_fit(const Dataset &data, Scenario model, const FitOptions &options) {
  ModelFitRecord rec;
  const Eigen::Index q = data.q();
  rec.estimates = Eigen::VectorXd::Constant(q + 3, std::numeric_limits<double>::quiet_NaN());
  rec.se = rec.estimates;
  try {
    const FitResult res = fit(data, model, options);
    rec.ok = true;
    rec.converged = res.converged;
    rec.estimates.head(q) = res.theta.beta;
    rec.estimates[q] = res.theta.sigma_e2;
    rec.estimates[q + 1] = res.theta.sigma_s2;
    rec.se.head(q + 2) = res.se.head(q + 2);
    if (res.lambda_free) {
      rec.estimates[q + 2] = res.theta.lambda;
      rec.se[q + 2] = res.se[q + 2];
    }
    rec.corrected_intercept = res.corrected_intercept;
    rec.loglik = res.loglik;
    rec.aic = res.aic;
    rec.iterations = res.iterations;
  } catch (const std::exception &e) {
    rec.error = e.what();
  }
  return rec;
}

/// Fraction of replicates where the SN model has strictly smaller AIC,
/// over replicates where both fits completed. A non-converged fit still
/// has a valid likelihood at its last iterate and takes part.
inline double selection_rate(const std::vector<ReplicateRecord> &records, int *pairs = nullptr) {
  int both = 0;
  int selected = 0;
  for (const auto &r : records) {
    if (r.sn.ok && r.normal.ok) {
      ++both;
      selected += r.sn.aic < r.normal.aic ? 1 : 0;
    }
  }
  if (pairs != nullptr) {
    *pairs = both;
  }
  return both > 0 ? static_cast<double>(selected) / both : std::numeric_limits<double>::quiet_NaN();
}

inline ModelSummary summarize_model(const std::vector<ReplicateRecord> &records, bool sn_side, Scenario model,
                                    const std::vector<std::string> &names, const Eigen::VectorXd &truth) {
  ModelSummary out;
  out.model = model;
  const Eigen::Index k = truth.size();
  std::vector<const ModelFitRecord *> used;
  for (const auto &r : records) {
    const ModelFitRecord &rec = sn_side ? r.sn : r.normal;
    if (rec.ok && rec.converged) {
      used.push_back(&rec);
    }
  }
  out.replicates_converged = static_cast<int>(used.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (Eigen::Index p = 0; p < k; ++p) {
    ParameterSummary ps;
    ps.name = names[static_cast<std::size_t>(p)];
    ps.truth = truth[p];
    if (used.empty() || std::isnan(used.front()->estimates[p])) {
      ps.mean_estimate = ps.mean_se = ps.mean_abs_bias = ps.sd_estimate = ps.mc_se = nan;
      out.parameters.push_back(ps);
      continue;
    }
    const double n = static_cast<double>(used.size());
    double sum = 0.0, sum_se = 0.0, sum_bias = 0.0;
    int finite_se = 0;
    for (const auto *rec : used) {
      sum += rec->estimates[p];
      sum_bias += std::abs(rec->estimates[p] - truth[p]);
      if (std::isfinite(rec->se[p])) {
        sum_se += rec->se[p];
        ++finite_se;
      }
    }
    ps.mean_estimate = sum / n;
    // SEs can be NaN where the observed information is not positive
    // definite (lambda near 0 or near the boundary).
    ps.mean_se = finite_se > 0 ? sum_se / finite_se : nan;
    ps.mean_abs_bias = sum_bias / n;
    double ss = 0.0;
    for (const auto *rec : used) {
      ss += (rec->estimates[p] - ps.mean_estimate) * (rec->estimates[p] - ps.mean_estimate);
    }
    ps.sd_estimate = used.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
    ps.mc_se = ps.sd_estimate / std::sqrt(n);
    out.parameters.push_back(ps);
  }
  double iters = 0.0;
  for (const auto *rec : used) {
    iters += rec->iterations;
  }
  out.mean_iterations = used.empty() ? nan : iters / static_cast<double>(used.size());
  return out;
}

/*
 * Runs the study: every replicate is fit under the generating SN scenario
 * and under the normal baseline. Replicates are distributed over
 * `workers` threads but stored and reduced by replicate index, so the
 * summary does not depend on the worker count.
 */
inline McSummary run_monte_carlo(const SimConfig &config) {
  if (config.replicates < 1) {
    throw DataError("run_monte_carlo: replicates must be >= 1");
  }
  if (!is_skewed(config.scenario)) {
    throw DataError("run_monte_carlo: scenario must be error-sn or effect-sn");
  }
  McSummary summary;
  summary.scenario = config.scenario;
  summary.replicates = config.replicates;
  summary.records.resize(static_cast<std::size_t>(config.replicates));

  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int r = next++; r < config.replicates; r = next++) {
      const Dataset data = generate_dataset(config, static_cast<std::uint64_t>(r));
      ReplicateRecord rec;
      rec.index = static_cast<std::uint64_t>(r);
      rec.sn = record_fit(data, config.scenario, config.fit_options);
      rec.normal = record_fit(data, Scenario::NormalBaseline, config.fit_options);
      summary.records[static_cast<std::size_t>(r)] = std::move(rec);
    }
  };
  const int workers = std::clamp(config.workers, 1, config.replicates);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back(worker);
    }
  }

  const std::vector<std::string> names = summary_parameter_names(config.layout);
  const Eigen::Index q = config.true_theta.beta.size();
  Eigen::VectorXd truth(q + 3);
  truth.head(q) = config.true_theta.beta;
  truth[q] = config.true_theta.sigma_e2;
  truth[q + 1] = config.true_theta.sigma_s2;
  truth[q + 2] = config.true_theta.lambda;
  summary.sn = summarize_model(summary.records, true, config.scenario, names, truth);
  summary.normal = summarize_model(summary.records, false, Scenario::NormalBaseline, names, truth);
  summary.sn_selected_rate = selection_rate(summary.records, &summary.selection_pairs);
  return summary;
}

}  // namespace snxover

#endif  // SNXOVER_SIMULATION_HPP_
