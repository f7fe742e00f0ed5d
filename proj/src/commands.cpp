#include "stackmi/commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "stackmi/errors.hpp"

namespace stackmi {

namespace fs = std::filesystem;

namespace {

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory '" + dir + "'");
}

Table load_input_table(const RunConfig& cfg, const std::string& path) {
  if (cfg.schema.empty()) throw ConfigError("no [column] sections: the data schema is required");
  return load_csv(path, cfg.schema, cfg.na_token);
}

void print_estimates(std::ostream& out, const std::vector<std::string>& names,
                     const Eigen::VectorXd& theta, const std::vector<VarianceReport>& reports) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-14s %12s %12s %12s %12s  %s\n", "coefficient", "estimate",
                "se", "ci_low", "ci_high", "method");
  out << buf;
  for (const auto& rep : reports) {
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%-14s %12.6f %12.6f %12.6f %12.6f  %s\n",
                    names[size_t(j)].c_str(), theta[j], rep.se[j], theta[j] - 1.96 * rep.se[j],
                    theta[j] + 1.96 * rep.se[j], variance_method_name(rep.method).c_str());
      out << buf;
    }
  }
}

}  // namespace

int cmd_simulate(const RunConfig& cfg, const std::string& out_dir, std::ostream& out,
                 std::ostream& err) {
  if (cfg.scenarios.empty()) {
    err << "config error: simulate needs at least one [scenario] section\n";
    return 1;
  }
  uint64_t seed = cfg.require_seed();
  ensure_dir(out_dir);

  bool over_threshold = false;
  std::string csv_path = join_path(out_dir, "study_report.csv");
  std::string txt_path = join_path(out_dir, "study_report.txt");
  std::ofstream csv(csv_path);
  if (!csv) throw InputError("cannot write '" + csv_path + "'");
  csv << "scenario,mechanism,method,variance_method,coefficient,bias_x100,emp_var,rel_emp_var,"
         "mean_est_var_x100,coverage_pct,n_fail\n";
  csv.close();

  std::ofstream txt(txt_path);
  for (size_t b = 0; b < cfg.scenarios.size(); ++b) {
    const ScenarioBlock& block = cfg.scenarios[b];
    StudyConfig study;
    study.scenario = block.id;
    study.n = block.n;
    study.replications = block.replications;
    study.imputations = cfg.imputations;
    study.cycles = cfg.cycles;
    study.mechanisms = block.phi;
    if (!block.methods.empty()) study.methods = block.methods;
    study.stacked_variances = cfg.effective_variances();
    study.stack_mode = cfg.stack_mode;
    study.seed = seed + b;  // one stream family per scenario block
    study.threads = cfg.threads;
    study.report_intercept = block.report_intercept;

    StudyReport report = run_study(study);

    // append rows
    std::string tmp = join_path(out_dir, "block.csv.tmp");
    write_report_csv(report, tmp);
    std::ifstream in(tmp);
    std::string line;
    std::getline(in, line);  // drop header
    std::ofstream app(csv_path, std::ios::app);
    while (std::getline(in, line)) app << line << '\n';
    in.close();
    fs::remove(tmp);

    std::string table = format_report_table(report);
    out << table;
    txt << table;

    for (const auto& row : report.rows)
      if (row.n_fail > block.max_failures) over_threshold = true;
  }
  out << "report: " << csv_path << "\n";
  return over_threshold ? 2 : 0;
}

int cmd_impute(const RunConfig& cfg, const std::string& data_csv, const std::string& out_dir,
               std::ostream& out, std::ostream& err) {
  (void)err;
  uint64_t seed = cfg.require_seed();
  std::string path = data_csv.empty() ? cfg.data_path : data_csv;
  if (path.empty()) throw ConfigError("no input data: give a csv argument or [data] path");
  Table data = load_input_table(cfg, path);

  std::vector<std::string> outcome_cols;
  if (cfg.outcome) {
    cfg.outcome->validate(data.columns());
    outcome_cols = cfg.outcome->response_columns();
  }

  ChainConfig chain;
  chain.imputations = cfg.imputations;
  chain.cycles = cfg.cycles;
  Rng rng(seed);
  std::vector<Table> tables =
      chained_impute(data, cfg.effective_imputers(data), chain, rng.split(1), outcome_cols);

  // Missing outcome values are drawn from the fitted outcome model per
  // imputation, once covariates are complete.
  if (cfg.outcome && cfg.outcome->family != Family::Cox) {
    Eigen::Index ycol = data.column_index(cfg.outcome->response);
    if (!data.column_complete(ycol)) {
      for (size_t m = 0; m < tables.size(); ++m) {
        Rng stream = rng.split(2).split(m);
        OutcomeDraw draw = draw_outcome_params(tables[m], *cfg.outcome, stream.split(0));
        tables[m] = impute_outcome(tables[m], *cfg.outcome, draw, stream.split(1));
      }
    }
  }

  ensure_dir(out_dir);
  if (cfg.impute_output == "separate") {
    char name[40];
    for (size_t m = 0; m < tables.size(); ++m) {
      std::snprintf(name, sizeof name, "imp_%03zu.csv", m + 1);
      write_csv(tables[m], join_path(out_dir, name), cfg.na_token);
    }
    out << "wrote " << tables.size() << " imputed files to " << out_dir << "\n";
  } else {
    StackedTable s = stack(tables, cfg.stack_mode);
    write_stacked_csv(s, join_path(out_dir, "stacked.csv"));
    out << "wrote " << join_path(out_dir, "stacked.csv") << " (" << s.n_rows() << " rows)\n";
  }
  return 0;
}

namespace {

// Stacked-analysis path shared by single-file and multi-file inputs.
int analyze_stacked(const RunConfig& cfg, StackedTable stacked, const std::string& out_dir,
                    std::ostream& out, std::ostream& err) {
  const OutcomeSpec& outcome = cfg.require_outcome();
  std::vector<VarianceMethod> variances = cfg.effective_variances();

  const bool needs_original =
      cfg.weight_mode != WeightMode::Unit ||
      std::find(variances.begin(), variances.end(), VarianceMethod::Wood) != variances.end();
  std::optional<Table> original;
  if (needs_original) {
    if (cfg.data_path.empty())
      throw ConfigError(
          "density weights and the wood variance need [data] path for the pre-imputation data");
    original = load_input_table(cfg, cfg.data_path);
  }

  Eigen::VectorXd file_weights =
      stacked.weights_set() ? stacked.weights : Eigen::VectorXd();

  StackedTable weighted = stacked;
  if (cfg.weight_mode == WeightMode::Unit) {
    weighted = unit_mi_weights(stacked);
  } else {
    CompleteCaseFit cc = complete_case_fit(*original, outcome);
    Rng rng(cfg.weight_mode == WeightMode::Draw ? cfg.require_seed()
                                                : (cfg.seed ? *cfg.seed : 0));
    weighted = compute_weights(stacked, cc, cfg.weight_mode, rng.split(3));
  }

  if (file_weights.size() == weighted.weights.size() && file_weights.size() > 0) {
    double max_diff = (file_weights - weighted.weights).lpNorm<Eigen::Infinity>();
    if (max_diff > 1e-10)
      err << "warning: recomputed weights differ from the _weight column (max "
          << max_diff << "); using recomputed weights\n";
  }

  Design d = build_design(outcome, weighted);
  FitResult fit = fit_weighted(d, weighted.weights);

  std::vector<VarianceReport> reports;
  for (VarianceMethod vm : variances) {
    switch (vm) {
      case VarianceMethod::Louis: reports.push_back(louis_variance(weighted, fit)); break;
      case VarianceMethod::Sandwich: reports.push_back(sandwich_variance(weighted, fit)); break;
      case VarianceMethod::Wood:
        reports.push_back(
            wood_variance(weighted, fit, coefficient_missing_fractions(*original, outcome)));
        break;
      default:
        throw ConfigError("variance method " + variance_method_name(vm) +
                          " needs the separate imputed files");
    }
  }

  ensure_dir(out_dir);
  write_estimates_csv(join_path(out_dir, "estimates.csv"), fit.coef_names, fit.theta, reports);
  print_estimates(out, fit.coef_names, fit.theta, reports);
  return 0;
}

}  // namespace

int cmd_analyze(const RunConfig& cfg, const std::vector<std::string>& inputs,
                const std::string& out_dir, std::ostream& out, std::ostream& err) {
  if (inputs.empty()) throw ConfigError("analyze needs a stacked csv or the imputed csv files");
  const OutcomeSpec& outcome = cfg.require_outcome();
  std::vector<VarianceMethod> variances = cfg.effective_variances();
  const bool wants_rubin =
      std::find(variances.begin(), variances.end(), VarianceMethod::Rubin) != variances.end();

  if (inputs.size() == 1) {
    if (wants_rubin)
      throw ConfigError("rubin combination needs the M separate imputed files, not a stack");
    StackedTable stacked = read_stacked_csv(inputs[0], cfg.schema);
    return analyze_stacked(cfg, std::move(stacked), out_dir, out, err);
  }

  // Multiple files: per-imputation tables. Rubin runs on the separate fits;
  // any other requested variance runs on their stack.
  std::vector<Table> tables;
  for (const auto& path : inputs) tables.push_back(load_input_table(cfg, path));

  std::vector<VarianceReport> reports;
  std::optional<Eigen::VectorXd> pooled;
  std::vector<std::string> names;
  if (wants_rubin) {
    std::vector<Eigen::VectorXd> thetas;
    std::vector<Eigen::MatrixXd> covs;
    for (const Table& t : tables) {
      FitResult fit = fit_unweighted(build_design(outcome, t));
      thetas.push_back(fit.theta);
      covs.push_back(fit.model_covariance());
      names = fit.coef_names;
    }
    RubinResult comb = rubin_combine(thetas, covs, names);
    pooled = comb.pooled;
    reports.push_back(comb.report);
  }

  std::vector<VarianceMethod> stacked_variances;
  for (VarianceMethod vm : variances)
    if (vm != VarianceMethod::Rubin) stacked_variances.push_back(vm);
  if (!stacked_variances.empty()) {
    RunConfig sub = cfg;
    sub.variances = stacked_variances;
    StackedTable stacked = stack(tables, cfg.stack_mode);
    int rc = analyze_stacked(sub, std::move(stacked), out_dir, out, err);
    if (rc != 0) return rc;
    if (pooled) {
      // append the rubin rows to the estimates written by the stacked path
      std::ofstream app(join_path(out_dir, "estimates.csv"), std::ios::app);
      char buf[160];
      for (Eigen::Index j = 0; j < pooled->size(); ++j) {
        double se = reports[0].se[j];
        std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%.17g,rubin\n",
                      names[size_t(j)].c_str(), (*pooled)[j], se, (*pooled)[j] - 1.96 * se,
                      (*pooled)[j] + 1.96 * se);
        app << buf;
      }
      print_estimates(out, names, *pooled, reports);
    }
    return 0;
  }

  if (pooled) {
    ensure_dir(out_dir);
    write_estimates_csv(join_path(out_dir, "estimates.csv"), names, *pooled, reports);
    print_estimates(out, names, *pooled, reports);
  }
  return 0;
}

}  // namespace stackmi
