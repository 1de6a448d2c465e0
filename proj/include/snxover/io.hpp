#ifndef SNXOVER_IO_HPP_
#define SNXOVER_IO_HPP_

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "snxover/design.hpp"
#include "snxover/diagnostics.hpp"
#include "snxover/em.hpp"
#include "snxover/model.hpp"
#include "snxover/simulation.hpp"
#include "snxover/skew_normal.hpp"

namespace snxover {

using Json = nlohmann::ordered_json;

/// Shortest "%.17g" style rendering; NaN prints as NA.
inline std::string format_number(double value, int precision = 17) {
  if (std::isnan(value)) {
    return "NA";
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", precision, value);
  return buf;
}

namespace detail {

inline std::string trim(const std::string &s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r\n");
  std::string out = s.substr(first, last - first + 1);
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') {
    out = out.substr(1, out.size() - 2);
  }
  return out;
}

inline std::vector<std::string> split_csv_line(const std::string &line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    fields.push_back(trim(field));
  }
  if (!line.empty() && line.back() == ',') {
    fields.emplace_back();
  }
  return fields;
}

inline bool is_missing(const std::string &cell) { return cell.empty() || cell == "NA" || cell == "na"; }

inline double parse_real(const std::string &cell, const std::string &column, long line) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(cell, &used);
  } catch (const std::exception &) {
    used = 0;
  }
  if (used != cell.size() || cell.empty() || !std::isfinite(value)) {
    throw DataError("line " + std::to_string(line) + ": non-numeric " + column + " '" + cell + "'");
  }
  return value;
}

inline int parse_index(const std::string &cell, const std::string &column, long line) {
  const double value = parse_real(cell, column, line);
  if (value < 1.0 || value != std::floor(value) || value > 1e9) {
    throw DataError("line " + std::to_string(line) + ": " + column + " must be a positive integer, got '" + cell +
                    "'");
  }
  return static_cast<int>(value);
}

/// Checks that the distinct values of an index column are exactly 1..K.
inline int contiguous_count(const std::set<int> &values, const std::string &column) {
  const int k = values.empty() ? 0 : *values.rbegin();
  if (static_cast<int>(values.size()) != k) {
    throw DataError(column + " labels must be the integers 1.." + std::to_string(k) + " with none skipped");
  }
  return k;
}

}  // namespace detail

/*
 * Long-format crossover data, one row per scalar observation:
 *
 *   sequence,subject,period,treatment,response,value[,covariate...]
 *
 * All index columns are 1-based integers; any further column is read as a
 * subject-level covariate. A value of "" or NA marks a missing cell, and a
 * subject with any missing cell (or fewer than p*m rows) is dropped with a
 * warning. The layout is inferred from the distinct index values and the
 * observed sequence x period treatments.
 */
inline Dataset read_long_csv(std::istream &in, const std::string &source = "input") {
  std::string line;
  long line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) {
      header = detail::split_csv_line(line);
      break;
    }
  }
  if (header.empty()) {
    throw DataError(source + ": empty file");
  }

  const std::vector<std::string> required = {"sequence", "subject", "period", "treatment", "response", "value"};
  std::map<std::string, std::size_t> column;
  for (std::size_t c = 0; c < header.size(); ++c) {
    std::string name = header[c];
    if (name == "response_index") {
      name = "response";
    }
    if (!column.emplace(name, c).second) {
      throw DataError(source + ": duplicate column '" + name + "'");
    }
  }
  for (const auto &name : required) {
    if (!column.contains(name)) {
      throw DataError(source + ": missing required column '" + name + "'");
    }
  }
  std::vector<std::string> covariate_names;
  std::vector<std::size_t> covariate_columns;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string &name = header[c];
    if (std::find(required.begin(), required.end(), name) == required.end() && name != "response_index") {
      covariate_names.push_back(name);
      covariate_columns.push_back(c);
    }
  }

  struct Row {
    int sequence, subject, period, treatment, response;
    std::optional<double> value;
    std::vector<std::optional<double>> covariates;
    long line;
  };
  std::vector<Row> rows;
  std::set<int> sequences, periods, treatments, responses;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) {
      continue;
    }
    const std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError(source + ": line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                      " fields, expected " + std::to_string(header.size()));
    }
    Row row;
    row.line = line_no;
    row.sequence = detail::parse_index(cells[column["sequence"]], "sequence", line_no);
    row.subject = detail::parse_index(cells[column["subject"]], "subject", line_no);
    row.period = detail::parse_index(cells[column["period"]], "period", line_no);
    row.treatment = detail::parse_index(cells[column["treatment"]], "treatment", line_no);
    row.response = detail::parse_index(cells[column["response"]], "response", line_no);
    const std::string &value = cells[column["value"]];
    if (!detail::is_missing(value)) {
      row.value = detail::parse_real(value, "value", line_no);
    }
    for (std::size_t c = 0; c < covariate_columns.size(); ++c) {
      const std::string &cell = cells[covariate_columns[c]];
      row.covariates.push_back(detail::is_missing(cell) ? std::nullopt
                                                        : std::optional(detail::parse_real(cell, covariate_names[c],
                                                                                           line_no)));
    }
    sequences.insert(row.sequence);
    periods.insert(row.period);
    treatments.insert(row.treatment);
    responses.insert(row.response);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) {
    throw DataError(source + ": no data rows");
  }

  CrossoverLayout layout;
  layout.sequences = detail::contiguous_count(sequences, "sequence");
  layout.periods = detail::contiguous_count(periods, "period");
  layout.treatments = detail::contiguous_count(treatments, "treatment");
  layout.responses = detail::contiguous_count(responses, "response");
  layout.covariates = covariate_names;
  layout.assignment.assign(static_cast<std::size_t>(layout.sequences),
                           std::vector<int>(static_cast<std::size_t>(layout.periods), 0));
  for (const auto &row : rows) {
    int &cell = layout.assignment[static_cast<std::size_t>(row.sequence - 1)][static_cast<std::size_t>(row.period - 1)];
    if (cell != 0 && cell != row.treatment) {
      throw DataError(source + ": line " + std::to_string(row.line) + ": sequence " + std::to_string(row.sequence) +
                      " period " + std::to_string(row.period) + " has treatment " + std::to_string(row.treatment) +
                      " but earlier rows give " + std::to_string(cell));
    }
    cell = row.treatment;
  }

  const int m = layout.responses;
  const int pm = layout.periods * m;
  struct Collected {
    std::vector<std::optional<double>> y;
    std::vector<bool> seen;
    std::vector<std::optional<double>> covariates;
    bool incomplete = false;
  };
  std::map<std::pair<int, int>, Collected> by_subject;
  for (const auto &row : rows) {
    auto [it, fresh] = by_subject.try_emplace({row.sequence, row.subject});
    Collected &c = it->second;
    if (fresh) {
      c.y.assign(static_cast<std::size_t>(pm), std::nullopt);
      c.seen.assign(static_cast<std::size_t>(pm), false);
      c.covariates = row.covariates;
    }
    const auto slot = static_cast<std::size_t>((row.period - 1) * m + (row.response - 1));
    if (c.seen[slot]) {
      throw DataError(source + ": line " + std::to_string(row.line) + ": duplicate record for sequence " +
                      std::to_string(row.sequence) + ", subject " + std::to_string(row.subject) + ", period " +
                      std::to_string(row.period) + ", response " + std::to_string(row.response));
    }
    c.seen[slot] = true;
    c.y[slot] = row.value;
    for (std::size_t k = 0; k < row.covariates.size(); ++k) {
      if (!row.covariates[k] || !c.covariates[k]) {
        c.incomplete = true;
      } else if (*row.covariates[k] != *c.covariates[k]) {
        throw DataError(source + ": line " + std::to_string(row.line) + ": covariate '" + covariate_names[k] +
                        "' changes within subject " + std::to_string(row.subject));
      }
    }
  }

  std::vector<std::string> dropped;
  layout.n_per_seq.assign(static_cast<std::size_t>(layout.sequences), 0);
  for (auto &[key, c] : by_subject) {
    for (const auto &v : c.y) {
      c.incomplete = c.incomplete || !v;
    }
    if (c.incomplete) {
      dropped.push_back("subject " + std::to_string(key.second) + " (sequence " + std::to_string(key.first) +
                        ") dropped: missing observations");
    } else {
      ++layout.n_per_seq[static_cast<std::size_t>(key.first - 1)];
    }
  }
  for (int i = 0; i < layout.sequences; ++i) {
    if (layout.n_per_seq[static_cast<std::size_t>(i)] == 0) {
      throw DataError(source + ": sequence " + std::to_string(i + 1) + " has no complete subjects");
    }
  }

  Dataset data;
  data.layout = layout;
  data.warnings = layout.validate();
  data.warnings.insert(data.warnings.end(), dropped.begin(), dropped.end());
  for (const auto &[key, c] : by_subject) {
    if (c.incomplete) {
      continue;
    }
    Eigen::VectorXd y(pm);
    for (int k = 0; k < pm; ++k) {
      y[k] = *c.y[static_cast<std::size_t>(k)];
    }
    std::map<std::string, double> covariates;
    for (std::size_t k = 0; k < covariate_names.size(); ++k) {
      covariates[covariate_names[k]] = *c.covariates[k];
    }
    data.add_subject(key.first, key.second, std::move(y), std::move(covariates));
  }
  return data;
}

inline Dataset read_long_csv(const std::string &path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open data file '" + path + "'");
  }
  return read_long_csv(in, path);
}

inline void write_long_csv(const Dataset &data, std::ostream &out) {
  out << "sequence,subject,period,treatment,response,value";
  for (const auto &name : data.layout.covariates) {
    out << ',' << name;
  }
  out << '\n';
  const auto order = response_order(data.layout);
  for (const auto &s : data.subjects) {
    for (std::size_t k = 0; k < order.size(); ++k) {
      const auto [period, response] = order[k];
      const int treatment =
          data.layout.assignment[static_cast<std::size_t>(s.sequence - 1)][static_cast<std::size_t>(period - 1)];
      out << s.sequence << ',' << s.id << ',' << period << ',' << treatment << ',' << response << ','
          << format_number(s.y[static_cast<Eigen::Index>(k)]);
      for (const auto &name : data.layout.covariates) {
        out << ',' << format_number(s.covariates.at(name));
      }
      out << '\n';
    }
  }
}

inline Json layout_to_json(const CrossoverLayout &layout) {
  Json j;
  j["sequences"] = layout.sequences;
  j["n_per_seq"] = layout.n_per_seq;
  j["periods"] = layout.periods;
  j["treatments"] = layout.treatments;
  j["responses"] = layout.responses;
  j["assignment"] = layout.assignment;
  j["covariates"] = layout.covariates;
  return j;
}

inline Json finite_or_null(double value) { return std::isfinite(value) ? Json(value) : Json(nullptr); }

/*
 * Result document of one fit. Parameters are listed in model order with
 * their standard errors; the skewness block (lambda, delta and the mean
 * offset of the skew term) exists only for skew-normal fits.
 */
inline Json fit_to_json(const FitResult &fit, const Dataset &data) {
  const ThetaState &theta = fit.theta;
  Json j;
  j["scenario"] = to_string(theta.scenario);
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  j["loglik"] = finite_or_null(fit.loglik);
  j["aic"] = finite_or_null(fit.aic);
  j["bic"] = finite_or_null(fit.bic);
  j["k"] = fit.k;
  j["n_obs"] = fit.n_obs;

  Json params = Json::array();
  const Eigen::Index q = theta.beta.size();
  for (std::size_t p = 0; p < fit.parameter_names.size(); ++p) {
    const auto i = static_cast<Eigen::Index>(p);
    double estimate = 0.0;
    if (i < q) {
      estimate = theta.beta[i];
    } else if (i == q) {
      estimate = theta.sigma_e2;
    } else if (i == q + 1) {
      estimate = theta.sigma_s2;
    } else {
      estimate = theta.lambda;
    }
    Json entry;
    entry["name"] = fit.parameter_names[p];
    entry["estimate"] = estimate;
    entry["se"] = i < fit.se.size() ? finite_or_null(fit.se[i]) : Json(nullptr);
    params.push_back(entry);
  }
  j["parameters"] = params;

  const double offset = fit.corrected_intercept - theta.beta[0];
  j["intercept"] = {{"raw", theta.beta[0]}, {"corrected", fit.corrected_intercept}, {"mean_offset", offset}};
  if (is_skewed(theta.scenario)) {
    j["skewness"] = {{"lambda", theta.lambda}, {"delta", delta_of_lambda(theta.lambda)}, {"mean_offset", offset}};
  }
  j["layout"] = layout_to_json(data.layout);
  j["trajectory"] = fit.trajectory;
  j["warnings"] = fit.warnings;
  return j;
}

/// Rebuilds the fitted parameters from a result document and checks that
/// they belong to `layout`.
inline ThetaState theta_from_json(const Json &j, const CrossoverLayout &layout) {
  ThetaState theta;
  try {
    theta.scenario = parse_scenario(j.at("scenario").get<std::string>());
    const FixedEffectIndex index(layout);
    const Json &layout_j = j.at("layout");
    if (layout_j.at("periods").get<int>() != layout.periods ||
        layout_j.at("responses").get<int>() != layout.responses) {
      throw DataError("fit has pm = " +
                      std::to_string(layout_j.at("periods").get<int>() * layout_j.at("responses").get<int>()) +
                      " but the data have pm = " + std::to_string(layout.observations_per_subject()));
    }
    std::map<std::string, double> values;
    for (const auto &p : j.at("parameters")) {
      values[p.at("name").get<std::string>()] = p.at("estimate").get<double>();
    }
    theta.beta.resize(index.size());
    for (const auto &name : index.names()) {
      if (!values.contains(name)) {
        throw DataError("fit has no estimate for fixed effect '" + name + "' of the data layout");
      }
      theta.beta[index.column(name)] = values[name];
    }
    if (static_cast<int>(values.size()) != index.size() + 2 + (values.contains("lambda") ? 1 : 0)) {
      throw DataError("fit has " + std::to_string(values.size()) + " parameters, which does not match the data layout");
    }
    theta.sigma_e2 = values.at("sigma_e2");
    theta.sigma_s2 = values.at("sigma_s2");
    theta.lambda = values.contains("lambda") ? values["lambda"] : 0.0;
  } catch (const nlohmann::json::exception &e) {
    throw DataError(std::string("malformed fit document: ") + e.what());
  } catch (const std::out_of_range &e) {
    throw DataError(std::string("malformed fit document: ") + e.what());
  }
  return theta;
}

inline void write_plot_csv(const std::vector<PlotRow> &rows, std::ostream &out) {
  out << "kind,index,x,y\n";
  for (const auto &r : rows) {
    out << r.kind << ',' << r.index << ',' << format_number(r.x) << ',' << format_number(r.y) << '\n';
  }
}

inline Json gof_to_json(const GofReport &report) {
  Json j;
  j["df"] = report.df;
  j["n"] = report.distances.size();
  j["ks_statistic"] = report.ks_statistic;
  j["ks_pvalue"] = report.ks_pvalue;
  j["healy_sup_deviation"] = healy_sup_deviation(report.healy_points);
  j["distances"] = report.distances;
  return j;
}

/// Monte Carlo summary, one row per (model, parameter). `sd` is the
/// spread of the estimates across replicates.
inline void write_summary_csv(const McSummary &summary, std::ostream &out) {
  out << "model,parameter,true,estimate,se,abs_bias,sd\n";
  for (const ModelSummary *m : {&summary.sn, &summary.normal}) {
    for (const auto &p : m->parameters) {
      out << to_string(m->model) << ',' << p.name << ',' << format_number(p.truth, 10) << ','
          << format_number(p.mean_estimate, 10) << ',' << format_number(p.mean_se, 10) << ','
          << format_number(p.mean_abs_bias, 10) << ',' << format_number(p.sd_estimate, 10) << '\n';
    }
  }
}

inline void write_replicates_csv(const McSummary &summary, const std::vector<std::string> &names,
                                 std::ostream &out) {
  out << "replicate,model,ok,converged,iterations,loglik,aic,parameter,estimate,se\n";
  for (const auto &r : summary.records) {
    const std::pair<Scenario, const ModelFitRecord *> sides[] = {{summary.scenario, &r.sn},
                                                                 {Scenario::NormalBaseline, &r.normal}};
    for (const auto &[model, rec] : sides) {
      for (std::size_t p = 0; p < names.size(); ++p) {
        const auto i = static_cast<Eigen::Index>(p);
        const double est = rec->ok ? rec->estimates[i] : std::numeric_limits<double>::quiet_NaN();
        if (std::isnan(est) && rec->ok) {
          continue;
        }
        out << r.index << ',' << to_string(model) << ',' << (rec->ok ? 1 : 0) << ',' << (rec->converged ? 1 : 0)
            << ',' << rec->iterations << ',' << format_number(rec->loglik) << ',' << format_number(rec->aic) << ','
            << names[p] << ',' << format_number(est) << ','
            << format_number(rec->ok ? rec->se[i] : std::numeric_limits<double>::quiet_NaN()) << '\n';
      }
    }
  }
}

}  // namespace snxover

#endif  // SNXOVER_IO_HPP_
