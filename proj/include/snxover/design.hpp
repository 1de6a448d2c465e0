#ifndef SNXOVER_DESIGN_HPP_
#define SNXOVER_DESIGN_HPP_

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace snxover {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/*
 * Geometry of an s-sequence, p-period, t-treatment crossover trial with m
 * responses recorded per period. Indices in the public API are 1-based,
 * matching the way trials are described; assignment[i][u] is the
 * treatment label given in period u+1 of sequence i+1.
 */
struct CrossoverLayout {
  int sequences = 0;
  std::vector<int> n_per_seq;
  int periods = 0;
  int treatments = 0;
  int responses = 0;
  std::vector<std::vector<int>> assignment;
  std::vector<std::string> covariates;

  int observations_per_subject() const { return periods * responses; }

  int total_subjects() const { return std::accumulate(n_per_seq.begin(), n_per_seq.end(), 0); }

  int fixed_effect_count() const {
    return periods + treatments + responses - 2 + static_cast<int>(covariates.size());
  }

  /// Throws DataError on a structurally invalid layout. Returns
  /// warnings for irregular (non-crossover) assignment rows.
  std::vector<std::string> validate() const {
    if (sequences <= 0 || periods <= 0 || treatments <= 0 || responses <= 0) {
      throw DataError("layout: sequences, periods, treatments and responses must be positive");
    }
    if (static_cast<int>(n_per_seq.size()) != sequences) {
      throw DataError("layout: n_per_seq must list one subject count per sequence");
    }
    for (int n : n_per_seq) {
      if (n < 0) {
        throw DataError("layout: negative subject count");
      }
    }
    if (total_subjects() <= 0) {
      throw DataError("layout: no subjects");
    }
    if (static_cast<int>(assignment.size()) != sequences) {
      throw DataError("layout: assignment table needs one row per sequence");
    }
    std::vector<std::string> warnings;
    for (int i = 0; i < sequences; ++i) {
      const auto &row = assignment[static_cast<std::size_t>(i)];
      if (static_cast<int>(row.size()) != periods) {
        throw DataError("layout: assignment row " + std::to_string(i + 1) + " must have one entry per period");
      }
      std::vector<int> seen(static_cast<std::size_t>(treatments) + 1, 0);
      for (int label : row) {
        if (label < 1 || label > treatments) {
          throw DataError("layout: treatment label " + std::to_string(label) + " outside 1.." +
                          std::to_string(treatments));
        }
        ++seen[static_cast<std::size_t>(label)];
      }
      if (periods <= treatments) {
        for (int l = 1; l <= treatments; ++l) {
          if (seen[static_cast<std::size_t>(l)] > 1) {
            warnings.push_back("sequence " + std::to_string(i + 1) + " repeats treatment " +
                               std::to_string(l) + " (not a standard crossover row)");
            break;
          }
        }
      }
    }
    return warnings;
  }
};

/// Column naming for the fixed-effects design; reference levels
/// (period 1, treatment 1, response 1) are dropped.
class FixedEffectIndex {
 public:
  explicit FixedEffectIndex(const CrossoverLayout &layout) {
    names_.emplace_back("intercept");
    for (int u = 2; u <= layout.periods; ++u) {
      names_.push_back("period_" + std::to_string(u));
    }
    for (int l = 2; l <= layout.treatments; ++l) {
      names_.push_back("treatment_" + std::to_string(l));
    }
    for (int v = 2; v <= layout.responses; ++v) {
      names_.push_back("gene_" + std::to_string(v));
    }
    for (const auto &c : layout.covariates) {
      names_.push_back(c);
    }
    for (std::size_t k = 0; k < names_.size(); ++k) {
      if (!positions_.emplace(names_[k], static_cast<int>(k)).second) {
        throw DataError("covariate name '" + names_[k] + "' collides with a design column");
      }
    }
  }

  int size() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string> &names() const { return names_; }
  const std::string &name(int column) const { return names_.at(static_cast<std::size_t>(column)); }

  int column(const std::string &name) const {
    auto it = positions_.find(name);
    if (it == positions_.end()) {
      throw std::out_of_range("no fixed effect named '" + name + "'");
    }
    return it->second;
  }

 private:
  std::vector<std::string> names_;
  std::map<std::string, int> positions_;
};

struct DesignPair {
  Eigen::MatrixXd X;
  Eigen::VectorXd Z;
};

/// (period, response) pairs in stacking order; period varies slowest.
inline std::vector<std::pair<int, int>> response_order(const CrossoverLayout &layout) {
  std::vector<std::pair<int, int>> order;
  order.reserve(static_cast<std::size_t>(layout.observations_per_subject()));
  for (int u = 1; u <= layout.periods; ++u) {
    for (int k = 1; k <= layout.responses; ++k) {
      order.emplace_back(u, k);
    }
  }
  return order;
}

inline DesignPair build_design(const CrossoverLayout &layout, int sequence, int subject,
                               const std::map<std::string, double> &covariate_values = {}) {
  if (sequence < 1 || sequence > layout.sequences) {
    throw DataError("build_design: sequence " + std::to_string(sequence) + " out of range");
  }
  if (subject < 1 || subject > layout.n_per_seq[static_cast<std::size_t>(sequence - 1)]) {
    throw DataError("build_design: subject " + std::to_string(subject) + " out of range for sequence " +
                    std::to_string(sequence));
  }
  for (const auto &[name, value] : covariate_values) {
    if (std::find(layout.covariates.begin(), layout.covariates.end(), name) == layout.covariates.end()) {
      throw DataError("build_design: unknown covariate '" + name + "'");
    }
  }

  const int pm = layout.observations_per_subject();
  const int q = layout.fixed_effect_count();
  const auto &row = layout.assignment[static_cast<std::size_t>(sequence - 1)];
  const int period_offset = 1;
  const int treatment_offset = period_offset + layout.periods - 1;
  const int gene_offset = treatment_offset + layout.treatments - 1;
  const int covariate_offset = gene_offset + layout.responses - 1;

  DesignPair design{Eigen::MatrixXd::Zero(pm, q), Eigen::VectorXd::Ones(pm)};
  Eigen::Index r = 0;
  for (const auto &[u, k] : response_order(layout)) {
    design.X(r, 0) = 1.0;
    if (u >= 2) {
      design.X(r, period_offset + u - 2) = 1.0;
    }
    const int label = row[static_cast<std::size_t>(u - 1)];
    if (label >= 2) {
      design.X(r, treatment_offset + label - 2) = 1.0;
    }
    if (k >= 2) {
      design.X(r, gene_offset + k - 2) = 1.0;
    }
    ++r;
  }
  for (std::size_t c = 0; c < layout.covariates.size(); ++c) {
    auto it = covariate_values.find(layout.covariates[c]);
    if (it == covariate_values.end()) {
      throw DataError("build_design: missing value for covariate '" + layout.covariates[c] + "'");
    }
    design.X.col(covariate_offset + static_cast<Eigen::Index>(c)).setConstant(it->second);
  }
  return design;
}

/*
 * Subject-level covariate used by the Monte Carlo design: three blocks of
 * subjects coded 0, 1, 2. Sizes 30 and 50 use the blocks 10/10/10 and
 * 18/16/16; any other size is split into equal thirds.
 */
inline int covariate_w(int sequence_size, int subject) {
  if (subject < 1 || subject > sequence_size) {
    throw std::out_of_range("covariate_w: subject outside the sequence");
  }
  if (sequence_size == 30) {
    return subject <= 10 ? 0 : (subject <= 20 ? 1 : 2);
  }
  if (sequence_size == 50) {
    return subject <= 18 ? 0 : (subject <= 34 ? 1 : 2);
  }
  return (3 * (subject - 1)) / sequence_size;
}

/// Three-sequence Latin square ABC/BCA/CAB with p = t = 3, m responses and
/// the block covariate "w".
inline CrossoverLayout latin_square_3x3_layout(int n_per_seq, int responses) {
  CrossoverLayout layout;
  layout.sequences = 3;
  layout.n_per_seq = {n_per_seq, n_per_seq, n_per_seq};
  layout.periods = 3;
  layout.treatments = 3;
  layout.responses = responses;
  layout.assignment = {{1, 2, 3}, {2, 3, 1}, {3, 1, 2}};
  layout.covariates = {"w"};
  return layout;
}

}  // namespace snxover

#endif  // SNXOVER_DESIGN_HPP_
