// Command-line front end: fit, simulate, diagnose and generate.
//
// Exit codes: 0 success, 2 input error (bad flags, unreadable or
// inconsistent data), 3 non-convergence (every requested fit failed to
// converge).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "snxover/snxover.hpp"

namespace fs = std::filesystem;
using namespace snxover;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNonConvergence = 3;

struct Options {
  std::string data;
  std::string fit_json;
  std::string scenario = "all";
  std::string out_dir = ".";
  std::string out_file;
  double tol = 5e-3;
  int max_iter = 500;
  std::uint64_t seed = 42;
  int reps = 50;
  int n = 30;
  int workers = 1;
  std::uint64_t replicate = 0;
};

std::ofstream open_output(const fs::path &path) {
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot write '" + path.string() + "'");
  }
  return out;
}

FitOptions fit_options(const Options &opt) {
  FitOptions fo;
  fo.tolerance = opt.tol;
  fo.max_iter = opt.max_iter;
  return fo;
}

void print_warnings(const std::vector<std::string> &warnings, const std::string &prefix) {
  for (const auto &w : warnings) {
    std::cerr << "warning: " << prefix << w << '\n';
  }
}

std::string estimate_cell(double estimate, double se) {
  char buf[64];
  if (std::isfinite(se)) {
    std::snprintf(buf, sizeof buf, "%9.4f (%.4f)", estimate, se);
  } else {
    std::snprintf(buf, sizeof buf, "%9.4f (NA)", estimate);
  }
  return buf;
}

// Side-by-side comparison of the three cases in the layout of a model
// comparison table: estimates with SEs, then likelihood and criteria.
void print_comparison(const std::vector<FitResult> &fits) {
  std::printf("%-16s", "parameter");
  for (const auto &f : fits) {
    std::printf("  %-22s", to_string(f.theta.scenario).c_str());
  }
  std::printf("\n");
  const std::vector<std::string> &names = fits.back().parameter_names;
  for (std::size_t p = 0; p < names.size(); ++p) {
    std::printf("%-16s", names[p].c_str());
    for (const auto &f : fits) {
      if (p >= f.parameter_names.size()) {
        std::printf("  %-22s", "-");
        continue;
      }
      const Eigen::VectorXd v = pack_free(f.theta, f.lambda_free);
      std::printf("  %-22s", estimate_cell(v[static_cast<Eigen::Index>(p)], f.se[static_cast<Eigen::Index>(p)]).c_str());
    }
    std::printf("\n");
  }
  auto row = [&](const char *label, auto value) {
    std::printf("%-16s", label);
    for (const auto &f : fits) {
      std::printf("  %-22s", value(f).c_str());
    }
    std::printf("\n");
  };
  auto num = [](double x) { return format_number(x, 8); };
  row("corr. intercept", [&](const FitResult &f) { return num(f.corrected_intercept); });
  row("loglik", [&](const FitResult &f) { return num(f.loglik); });
  row("AIC", [&](const FitResult &f) { return num(f.aic); });
  row("BIC", [&](const FitResult &f) { return num(f.bic); });
  row("k", [&](const FitResult &f) { return std::to_string(f.k); });
  row("iterations", [&](const FitResult &f) { return std::to_string(f.iterations); });
  row("converged", [&](const FitResult &f) { return std::string(f.converged ? "yes" : "no"); });

  std::size_t best = 0;
  for (std::size_t i = 1; i < fits.size(); ++i) {
    best = fits[i].aic < fits[best].aic ? i : best;
  }
  std::printf("lowest AIC: %s\n", to_string(fits[best].theta.scenario).c_str());
}

int cmd_fit(const Options &opt) {
  const Dataset data = read_long_csv(opt.data);
  print_warnings(data.warnings, "");
  std::vector<Scenario> scenarios;
  if (opt.scenario == "all") {
    scenarios = {Scenario::NormalBaseline, Scenario::ErrorSN, Scenario::EffectSN};
  } else {
    scenarios = {parse_scenario(opt.scenario)};
  }

  std::vector<FitResult> fits(scenarios.size());
  auto run = [&](std::size_t i) { fits[i] = fit(data, scenarios[i], fit_options(opt)); };
  if (opt.workers > 1 && scenarios.size() > 1) {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
      pool.emplace_back(run, i);
    }
  } else {
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
      run(i);
    }
  }

  bool any_converged = false;
  for (const auto &f : fits) {
    const std::string name = to_string(f.theta.scenario);
    print_warnings(f.warnings, name + ": ");
    any_converged = any_converged || f.converged;
    const fs::path dir(opt.out_dir);
    open_output(dir / ("fit_" + name + ".json")) << fit_to_json(f, data).dump(2) << '\n';
    const GofReport gof = goodness_of_fit(f.theta, data);
    auto plot = open_output(dir / ("plot_" + name + ".csv"));
    write_plot_csv(plot_rows(f.theta, data, gof), plot);
  }

  if (fits.size() > 1) {
    print_comparison(fits);
  } else {
    const FitResult &f = fits.front();
    std::printf("%s: loglik %s  AIC %s  BIC %s  iterations %d  %s\n", to_string(f.theta.scenario).c_str(),
                format_number(f.loglik, 8).c_str(), format_number(f.aic, 8).c_str(), format_number(f.bic, 8).c_str(),
                f.iterations, f.converged ? "converged" : "NOT converged");
  }
  return any_converged ? kExitOk : kExitNonConvergence;
}

int cmd_simulate(const Options &opt) {
  const Scenario scenario = parse_scenario(opt.scenario);
  if (!is_skewed(scenario)) {
    throw DataError("simulate: --scenario must be error-sn or effect-sn");
  }
  SimConfig config = default_sim_config(scenario, opt.n, opt.reps, opt.seed);
  config.workers = opt.workers;
  config.fit_options = fit_options(opt);
  config.fit_options.compute_standard_errors = true;
  const McSummary summary = run_monte_carlo(config);

  const fs::path dir(opt.out_dir);
  const std::string name = to_string(scenario);
  auto summary_out = open_output(dir / ("summary_" + name + ".csv"));
  write_summary_csv(summary, summary_out);
  auto reps_out = open_output(dir / ("replicates_" + name + ".csv"));
  write_replicates_csv(summary, summary_parameter_names(config.layout), reps_out);

  std::printf("%-12s %8s | %10s %9s %9s | %10s %9s %9s\n", "parameter", "true", name.c_str(), "se", "abs_bias",
              "normal", "se", "abs_bias");
  for (std::size_t p = 0; p < summary.sn.parameters.size(); ++p) {
    const auto &a = summary.sn.parameters[p];
    const auto &b = summary.normal.parameters[p];
    std::printf("%-12s %8.3f | %10.4f %9.4f %9.4f | %10.4f %9.4f %9.4f\n", a.name.c_str(), a.truth, a.mean_estimate,
                a.mean_se, a.mean_abs_bias, b.mean_estimate, b.mean_se, b.mean_abs_bias);
  }
  std::printf("converged: %s %d/%d, normal %d/%d; AIC selects %s in %.1f%% of %d replicates\n", name.c_str(),
              summary.sn.replicates_converged, summary.replicates, summary.normal.replicates_converged,
              summary.replicates, name.c_str(), 100.0 * summary.sn_selected_rate, summary.selection_pairs);
  return summary.sn.replicates_converged == 0 && summary.normal.replicates_converged == 0 ? kExitNonConvergence
                                                                                          : kExitOk;
}

int cmd_diagnose(const Options &opt) {
  const Dataset data = read_long_csv(opt.data);
  std::ifstream in(opt.fit_json);
  if (!in) {
    throw DataError("cannot open fit file '" + opt.fit_json + "'");
  }
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const nlohmann::json::exception &e) {
    throw DataError("'" + opt.fit_json + "' is not valid JSON: " + e.what());
  }
  const ThetaState theta = theta_from_json(doc, data.layout);
  const GofReport gof = goodness_of_fit(theta, data);

  const fs::path dir(opt.out_dir);
  open_output(dir / "gof.json") << gof_to_json(gof).dump(2) << '\n';
  auto plot = open_output(dir / "plot_gof.csv");
  write_plot_csv(plot_rows(theta, data, gof), plot);
  std::printf("Mahalanobis distances: n = %zu, df = %d\n", gof.distances.size(), gof.df);
  std::printf("KS vs chi-square(%d): D = %.4f, p = %.4f\n", gof.df, gof.ks_statistic, gof.ks_pvalue);
  std::printf("Healy sup deviation: %.4f\n", healy_sup_deviation(gof.healy_points));
  return kExitOk;
}

int cmd_generate(const Options &opt) {
  const Scenario scenario = parse_scenario(opt.scenario);
  const SimConfig config = default_sim_config(scenario, opt.n, 1, opt.seed);
  const Dataset data = generate_dataset(config, opt.replicate);
  const fs::path path = opt.out_file.empty() ? fs::path(opt.out_dir) / "data.csv" : fs::path(opt.out_file);
  auto out = open_output(path);
  write_long_csv(data, out);
  std::printf("wrote %zu subjects x %d observations to %s\n", data.subjects.size(), data.pm(), path.string().c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Skew-normal linear mixed models for crossover trials"};
  app.require_subcommand(1);
  Options opt;

  auto add_fit_flags = [&](CLI::App *cmd) {
    cmd->add_option("--tol", opt.tol, "Convergence tolerance on the max absolute parameter change")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--max-iter", opt.max_iter, "Maximum EM iterations")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
  };
  auto add_common = [&](CLI::App *cmd) {
    cmd->add_option("--seed", opt.seed, "Random seed")->capture_default_str();
    cmd->add_option("--workers", opt.workers, "Worker threads (output does not depend on it)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--out-dir", opt.out_dir, "Output directory")->capture_default_str();
  };

  CLI::App *fit_cmd = app.add_subcommand("fit", "Fit one or all models to a long-format CSV");
  fit_cmd->add_option("--data", opt.data, "Input CSV")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--scenario", opt.scenario, "normal, error-sn, effect-sn or all")
      ->check(CLI::IsMember({"normal", "error-sn", "effect-sn", "all"}))
      ->capture_default_str();
  add_fit_flags(fit_cmd);
  add_common(fit_cmd);

  CLI::App *sim_cmd = app.add_subcommand("simulate", "Run the Monte Carlo study");
  sim_cmd->add_option("--scenario", opt.scenario, "error-sn or effect-sn")
      ->required()
      ->check(CLI::IsMember({"error-sn", "effect-sn"}));
  sim_cmd->add_option("--n", opt.n, "Subjects per sequence")->check(CLI::PositiveNumber)->capture_default_str();
  sim_cmd->add_option("--reps", opt.reps, "Replicates")->check(CLI::PositiveNumber)->capture_default_str();
  add_fit_flags(sim_cmd);
  add_common(sim_cmd);

  CLI::App *diag_cmd = app.add_subcommand("diagnose", "Goodness of fit of a saved fit on its data");
  diag_cmd->add_option("--fit", opt.fit_json, "Fit JSON written by 'fit'")->required()->check(CLI::ExistingFile);
  diag_cmd->add_option("--data", opt.data, "Input CSV")->required()->check(CLI::ExistingFile);
  add_common(diag_cmd);

  CLI::App *gen_cmd = app.add_subcommand("generate", "Write one simulated dataset as long-format CSV");
  gen_cmd->add_option("--scenario", opt.scenario, "normal, error-sn or effect-sn")
      ->required()
      ->check(CLI::IsMember({"normal", "error-sn", "effect-sn"}));
  gen_cmd->add_option("--n", opt.n, "Subjects per sequence")->check(CLI::PositiveNumber)->capture_default_str();
  gen_cmd->add_option("--replicate", opt.replicate, "Replicate index of the seed's stream")->capture_default_str();
  gen_cmd->add_option("--out", opt.out_file, "Output CSV (default <out-dir>/data.csv)");
  add_common(gen_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (fit_cmd->parsed()) {
      return cmd_fit(opt);
    }
    if (sim_cmd->parsed()) {
      return cmd_simulate(opt);
    }
    if (diag_cmd->parsed()) {
      return cmd_diagnose(opt);
    }
    return cmd_generate(opt);
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
}
