#ifndef SNXOVER_MODEL_HPP_
#define SNXOVER_MODEL_HPP_

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "snxover/design.hpp"

namespace snxover {

/// Which latent term carries the skewness.
enum class Scenario {
  ErrorSN,         ///< error vector skew-normal in its first coordinate, random intercept normal
  EffectSN,        ///< random intercept skew-normal, errors normal
  NormalBaseline,  ///< both normal; lambda pinned at 0
};

inline std::string to_string(Scenario scenario) {
  switch (scenario) {
    case Scenario::ErrorSN:
      return "error-sn";
    case Scenario::EffectSN:
      return "effect-sn";
    case Scenario::NormalBaseline:
      return "normal";
  }
  return "unknown";
}

inline Scenario parse_scenario(std::string_view name) {
  if (name == "error-sn") {
    return Scenario::ErrorSN;
  }
  if (name == "effect-sn") {
    return Scenario::EffectSN;
  }
  if (name == "normal") {
    return Scenario::NormalBaseline;
  }
  throw DataError("unknown scenario '" + std::string(name) + "' (expected normal, error-sn or effect-sn)");
}

inline bool is_skewed(Scenario scenario) { return scenario != Scenario::NormalBaseline; }

/// Variance-component vector (sigma_e^2, sigma_s^2, lambda).
using VarianceParams = Eigen::Vector3d;

inline constexpr int kSigmaE2 = 0;
inline constexpr int kSigmaS2 = 1;
inline constexpr int kLambda = 2;

struct ThetaState {
  Eigen::VectorXd beta;
  double sigma_e2 = 1.0;
  double sigma_s2 = 1.0;
  double lambda = 0.0;
  Scenario scenario = Scenario::NormalBaseline;

  VarianceParams xi() const { return {sigma_e2, sigma_s2, lambda}; }

  void set_xi(const VarianceParams &xi) {
    sigma_e2 = xi[kSigmaE2];
    sigma_s2 = xi[kSigmaS2];
    lambda = xi[kLambda];
  }
};

struct Subject {
  int sequence = 1;
  int id = 1;
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  std::map<std::string, double> covariates;
};

/// Complete per-subject response vectors with their design matrices.
struct Dataset {
  CrossoverLayout layout;
  std::vector<Subject> subjects;
  std::vector<std::string> warnings;

  int pm() const { return layout.observations_per_subject(); }
  int q() const { return layout.fixed_effect_count(); }
  long n_obs() const { return static_cast<long>(subjects.size()) * pm(); }

  /// Appends a subject, building its design matrix from the layout. `id`
  /// is the external label; the subject's position within its sequence
  /// is the order of insertion.
  void add_subject(int sequence, int id, Eigen::VectorXd y, std::map<std::string, double> covariates = {}) {
    if (y.size() != pm()) {
      throw DataError("subject " + std::to_string(id) + " has " + std::to_string(y.size()) +
                      " observations, expected " + std::to_string(pm()));
    }
    int position = 1;
    for (const auto &existing : subjects) {
      position += existing.sequence == sequence ? 1 : 0;
    }
    Subject s;
    s.sequence = sequence;
    s.id = id;
    s.X = build_design(layout, sequence, position, covariates).X;
    s.y = std::move(y);
    s.covariates = std::move(covariates);
    subjects.push_back(std::move(s));
  }
};

}  // namespace snxover

#endif  // SNXOVER_MODEL_HPP_
