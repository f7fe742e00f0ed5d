#include "stackmi/study.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "stackmi/errors.hpp"

namespace stackmi {

std::string method_name(Method m) {
  switch (m) {
    case Method::FullData: return "full-data";
    case Method::CompleteCase: return "complete-case";
    case Method::MiceYRubin: return "mice-with-y-rubin";
    case Method::MiceYStackUnit: return "mice-with-y-stacked";
    case Method::MiceNoYRubin: return "mice-without-y-rubin";
    case Method::Proposed: return "proposed";
    case Method::ProposedDraw: return "proposed-draw";
    case Method::MiceMultinomial: return "mice-multinomial";
  }
  return "?";
}

Method parse_method(const std::string& text) {
  for (Method m : all_methods())
    if (method_name(m) == text) return m;
  throw InputError("unknown method '" + text + "'");
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> methods = {
      Method::FullData,       Method::CompleteCase, Method::MiceYRubin,
      Method::MiceYStackUnit, Method::MiceNoYRubin, Method::Proposed,
      Method::ProposedDraw,   Method::MiceMultinomial};
  return methods;
}

OutcomeSpec scenario_outcome(int id) {
  OutcomeSpec spec;
  switch (id) {
    case 1:
      spec.family = Family::Gaussian;
      spec.response = "y";
      spec.terms = {"x1", "x2"};
      break;
    case 2:
      spec.family = Family::Bernoulli;
      spec.response = "y";
      spec.terms = {"x1", "x2", "x3"};
      break;
    case 3:
      spec.family = Family::Gaussian;
      spec.response = "y";
      spec.terms = {"x1", "x2"};
      spec.interactions = {{"x1", "x2"}};
      break;
    case 4:
      spec.family = Family::Cox;
      spec.time = "time";
      spec.event = "event";
      spec.terms = {"x1", "x2"};
      break;
    default:
      throw InputError("scenario id must be 1, 2, 3 or 4");
  }
  return spec;
}

double scenario_truth(int id, const std::string& coefficient) {
  switch (id) {
    case 1:
      if (coefficient == "(intercept)") return 0.0;
      if (coefficient == "x1") return 0.53;
      if (coefficient == "x2") return 1.25;
      break;
    case 2:
      if (coefficient == "(intercept)" || coefficient == "x1" || coefficient == "x2" ||
          coefficient == "x3")
        return 0.5;
      break;
    case 3:
      if (coefficient == "(intercept)") return 0.0;
      if (coefficient == "x1" || coefficient == "x2" || coefficient == "x1:x2") return 1.0;
      break;
    case 4:
      if (coefficient == "x1" || coefficient == "x2") return 0.5;
      break;
  }
  throw InputError("no generating value for coefficient '" + coefficient + "' in scenario " +
                   std::to_string(id));
}

std::vector<ImputerSpec> scenario_imputers(int id, bool include_outcome) {
  std::vector<ImputerSpec> specs;
  switch (id) {
    case 1:
    case 3: {
      ImputerSpec x2{"x2", {"x1"}, ImputerFamily::BayesLinear};
      if (include_outcome) x2.predictors.push_back("y");
      specs.push_back(std::move(x2));
      break;
    }
    case 2: {
      ImputerSpec x2{"x2", {"x1", "x3"}, ImputerFamily::BayesLinear};
      ImputerSpec x3{"x3", {"x1", "x2"}, ImputerFamily::BayesLinear};
      if (include_outcome) {
        x2.predictors.push_back("y");
        x3.predictors.push_back("y");
      }
      specs.push_back(std::move(x2));
      specs.push_back(std::move(x3));
      break;
    }
    case 4: {
      ImputerSpec x2{"x2", {"x1"}, ImputerFamily::BayesLinear};
      if (include_outcome) {
        x2.predictors.push_back("event");
        x2.predictors.push_back("_cumhaz");
      }
      specs.push_back(std::move(x2));
      break;
    }
    default:
      throw InputError("scenario id must be 1, 2, 3 or 4");
  }
  return specs;
}

Table append_nelson_aalen(const Table& table, const std::string& time_col,
                          const std::string& event_col, const std::string& new_col) {
  Eigen::Index tc = table.column_index(time_col);
  Eigen::Index ec = table.column_index(event_col);
  if (!table.column_complete(tc) || !table.column_complete(ec))
    throw InputError("nelson-aalen estimate needs complete time and event columns");

  const Eigen::Index n = table.n_rows();
  std::vector<Eigen::Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return table.value(a, tc) < table.value(b, tc);
  });

  Eigen::VectorXd hazard_at(n);
  double cum = 0.0;
  Eigen::Index at_risk = n;
  size_t i = 0;
  while (i < size_t(n)) {
    double t = table.value(order[i], tc);
    size_t j = i;
    Eigen::Index events = 0;
    for (; j < size_t(n) && table.value(order[j], tc) == t; ++j)
      if (table.value(order[j], ec) == 1.0) ++events;
    cum += double(events) / double(at_risk);
    for (size_t k = i; k < j; ++k) hazard_at[order[k]] = cum;
    at_risk -= Eigen::Index(j - i);
    i = j;
  }

  std::vector<ColumnSpec> columns = table.columns();
  columns.push_back({new_col, ColumnRole::Continuous, 0});
  Eigen::MatrixXd values(n, table.n_cols() + 1);
  values.leftCols(table.n_cols()) = table.values();
  values.col(table.n_cols()) = hazard_at;
  BoolGrid mask(n, table.n_cols() + 1);
  mask.leftCols(table.n_cols()) = table.mask();
  mask.col(table.n_cols()).setConstant(true);
  return Table(std::move(columns), std::move(values), std::move(mask));
}

namespace {

Table drop_column(const Table& table, const std::string& name) {
  Eigen::Index drop = table.column_index(name);
  std::vector<ColumnSpec> columns;
  Eigen::MatrixXd values(table.n_rows(), table.n_cols() - 1);
  BoolGrid mask(table.n_rows(), table.n_cols() - 1);
  Eigen::Index out = 0;
  for (Eigen::Index j = 0; j < table.n_cols(); ++j) {
    if (j == drop) continue;
    columns.push_back(table.column(j));
    values.col(out) = table.values().col(j);
    mask.col(out) = table.mask().col(j);
    ++out;
  }
  return Table(std::move(columns), std::move(values), std::move(mask));
}

bool wants(const StudyConfig& cfg, Method m) {
  return std::find(cfg.methods.begin(), cfg.methods.end(), m) != cfg.methods.end();
}

MethodEstimate from_fit(const FitResult& fit, VarianceMethod vm, const Eigen::MatrixXd& cov) {
  MethodEstimate est;
  est.ok = true;
  est.theta = fit.theta;
  est.coef_names = fit.coef_names;
  Eigen::VectorXd se(cov.rows());
  for (Eigen::Index j = 0; j < se.size(); ++j) se[j] = std::sqrt(std::max(0.0, cov(j, j)));
  est.ses.emplace_back(vm, se);
  return est;
}

MethodEstimate failed(const std::string& message) {
  MethodEstimate est;
  est.error = message.empty() ? "upstream step failed" : message;
  return est;
}

MethodEstimate rubin_pipeline(const std::vector<Table>& tables, const OutcomeSpec& outcome) {
  std::vector<Eigen::VectorXd> thetas;
  std::vector<Eigen::MatrixXd> covs;
  std::vector<std::string> names;
  for (const Table& t : tables) {
    FitResult fit = fit_unweighted(build_design(outcome, t));
    thetas.push_back(fit.theta);
    covs.push_back(fit.model_covariance());
    names = fit.coef_names;
  }
  RubinResult comb = rubin_combine(thetas, covs, names);
  MethodEstimate est;
  est.ok = true;
  est.theta = comb.pooled;
  est.coef_names = names;
  est.ses.emplace_back(VarianceMethod::Rubin, comb.report.se);
  return est;
}

MethodEstimate stacked_pipeline(const StackedTable& weighted, const OutcomeSpec& outcome,
                                const std::vector<VarianceMethod>& variances,
                                const Table& masked) {
  Design d = build_design(outcome, weighted);
  FitResult fit = fit_weighted(d, weighted.weights);
  MethodEstimate est;
  est.ok = true;
  est.theta = fit.theta;
  est.coef_names = fit.coef_names;
  for (VarianceMethod vm : variances) {
    switch (vm) {
      case VarianceMethod::Louis:
        est.ses.emplace_back(vm, louis_variance(weighted, fit).se);
        break;
      case VarianceMethod::Sandwich:
        est.ses.emplace_back(vm, sandwich_variance(weighted, fit).se);
        break;
      case VarianceMethod::Wood:
        est.ses.emplace_back(
            vm, wood_variance(weighted, fit, coefficient_missing_fractions(masked, outcome)).se);
        break;
      default:
        throw InputError("variance method " + variance_method_name(vm) +
                         " cannot be applied to a stacked fit");
    }
  }
  return est;
}

}  // namespace

ReplicationResult run_replication(const StudyConfig& cfg, size_t mechanism_index, int rep) {
  ReplicationResult out;
  const auto phi = cfg.mechanisms.at(mechanism_index);
  Rng rng = Rng(cfg.seed).split(mechanism_index).split(uint64_t(rep));

  Table full = generate_scenario(cfg.scenario, cfg.n, rng.split(0));
  Table masked = apply_missingness(
      full, scenario_mechanisms(cfg.scenario, phi[0], phi[1], phi[2]), rng.split(1));
  const OutcomeSpec outcome = scenario_outcome(cfg.scenario);

  ChainConfig chain;
  chain.imputations = cfg.imputations;
  chain.cycles = cfg.cycles;

  const bool need_noy = wants(cfg, Method::MiceNoYRubin) || wants(cfg, Method::Proposed) ||
                        wants(cfg, Method::ProposedDraw) || wants(cfg, Method::MiceMultinomial);
  const bool need_y = wants(cfg, Method::MiceYRubin) || wants(cfg, Method::MiceYStackUnit);
  const bool need_cc = wants(cfg, Method::CompleteCase) || wants(cfg, Method::Proposed) ||
                       wants(cfg, Method::ProposedDraw) || wants(cfg, Method::MiceMultinomial);

  if (wants(cfg, Method::FullData)) {
    try {
      FitResult fit = fit_unweighted(build_design(outcome, full));
      out.estimates[Method::FullData] =
          from_fit(fit, VarianceMethod::Model, fit.model_covariance());
    } catch (const std::exception& e) {
      out.estimates[Method::FullData] = failed(e.what());
    }
  }

  std::optional<CompleteCaseFit> cc;
  std::string cc_error;
  if (need_cc) {
    try {
      cc = complete_case_fit(masked, outcome);
    } catch (const std::exception& e) {
      cc_error = e.what();
    }
  }
  if (wants(cfg, Method::CompleteCase)) {
    out.estimates[Method::CompleteCase] =
        cc ? from_fit(cc->fit, VarianceMethod::Model, cc->fit.model_covariance())
           : failed(cc_error);
  }

  std::vector<Table> tables_noy;
  std::string noy_error;
  if (need_noy) {
    try {
      tables_noy = chained_impute(masked, scenario_imputers(cfg.scenario, false), chain,
                                  rng.split(2), outcome.response_columns());
    } catch (const std::exception& e) {
      noy_error = e.what();
    }
  }

  std::vector<Table> tables_y;
  std::string y_error;
  if (need_y) {
    try {
      if (cfg.scenario == 4) {
        Table augmented = append_nelson_aalen(masked, "time", "event", "_cumhaz");
        std::vector<Table> raw =
            chained_impute(augmented, scenario_imputers(4, true), chain, rng.split(3), {});
        for (const Table& t : raw) tables_y.push_back(drop_column(t, "_cumhaz"));
      } else {
        tables_y = chained_impute(masked, scenario_imputers(cfg.scenario, true), chain,
                                  rng.split(3), {});
      }
    } catch (const std::exception& e) {
      y_error = e.what();
    }
  }

  if (wants(cfg, Method::MiceNoYRubin)) {
    try {
      out.estimates[Method::MiceNoYRubin] =
          tables_noy.empty() ? failed(noy_error) : rubin_pipeline(tables_noy, outcome);
    } catch (const std::exception& e) {
      out.estimates[Method::MiceNoYRubin] = failed(e.what());
    }
  }
  if (wants(cfg, Method::MiceYRubin)) {
    try {
      out.estimates[Method::MiceYRubin] =
          tables_y.empty() ? failed(y_error) : rubin_pipeline(tables_y, outcome);
    } catch (const std::exception& e) {
      out.estimates[Method::MiceYRubin] = failed(e.what());
    }
  }
  if (wants(cfg, Method::MiceYStackUnit)) {
    try {
      if (tables_y.empty()) {
        out.estimates[Method::MiceYStackUnit] = failed(y_error);
      } else {
        StackedTable s = unit_mi_weights(stack(tables_y, cfg.stack_mode));
        out.estimates[Method::MiceYStackUnit] =
            stacked_pipeline(s, outcome, cfg.stacked_variances, masked);
      }
    } catch (const std::exception& e) {
      out.estimates[Method::MiceYStackUnit] = failed(e.what());
    }
  }

  std::optional<StackedTable> stack_noy;
  if ((wants(cfg, Method::Proposed) || wants(cfg, Method::ProposedDraw)) && !tables_noy.empty()) {
    try {
      stack_noy = stack(tables_noy, cfg.stack_mode);
    } catch (const std::exception& e) {
      noy_error = e.what();
    }
  }

  auto proposed_pipeline = [&](WeightMode mode, Rng stream) -> MethodEstimate {
    if (!cc) return failed(cc_error);
    if (!stack_noy) return failed(noy_error);
    StackedTable weighted = compute_weights(*stack_noy, *cc, mode, stream);
    return stacked_pipeline(weighted, outcome, cfg.stacked_variances, masked);
  };
  if (wants(cfg, Method::Proposed)) {
    try {
      out.estimates[Method::Proposed] = proposed_pipeline(WeightMode::Mle, rng.split(4));
    } catch (const std::exception& e) {
      out.estimates[Method::Proposed] = failed(e.what());
    }
  }
  if (wants(cfg, Method::ProposedDraw)) {
    try {
      out.estimates[Method::ProposedDraw] = proposed_pipeline(WeightMode::Draw, rng.split(5));
    } catch (const std::exception& e) {
      out.estimates[Method::ProposedDraw] = failed(e.what());
    }
  }

  if (wants(cfg, Method::MiceMultinomial)) {
    try {
      if (!cc) {
        out.estimates[Method::MiceMultinomial] = failed(cc_error);
      } else if (tables_noy.empty()) {
        out.estimates[Method::MiceMultinomial] = failed(noy_error);
      } else {
        const BaselineHazard* base = cc->baseline ? &*cc->baseline : nullptr;
        Eigen::MatrixXd logf(cfg.n, Eigen::Index(tables_noy.size()));
        for (size_t m = 0; m < tables_noy.size(); ++m) {
          Design d = build_design(outcome, tables_noy[m]);
          for (Eigen::Index i = 0; i < cfg.n; ++i)
            logf(i, Eigen::Index(m)) = log_density_row(d, i, cc->fit.theta, cc->fit.sigma2, base);
        }
        Table selected = multinomial_select(tables_noy, logf, rng.split(6));
        FitResult fit = fit_unweighted(build_design(outcome, selected));
        out.estimates[Method::MiceMultinomial] =
            from_fit(fit, VarianceMethod::Model, fit.model_covariance());
      }
    } catch (const std::exception& e) {
      out.estimates[Method::MiceMultinomial] = failed(e.what());
    }
  }

  return out;
}

StudyReport run_study(const StudyConfig& cfg) {
  if (cfg.mechanisms.empty()) throw InputError("study needs at least one mechanism");
  if (cfg.replications < 1) throw InputError("study needs at least one replication");

  StudyReport report;
  report.scenario = cfg.scenario;
  report.n = cfg.n;
  report.replications = cfg.replications;
  report.imputations = cfg.imputations;

  for (size_t mech = 0; mech < cfg.mechanisms.size(); ++mech) {
    const auto phi = cfg.mechanisms[mech];
    std::string label = mechanism_label(phi[1], phi[2]);

    // Replications are independent; results land in a slot per index so the
    // aggregation below is identical for any thread count.
    std::vector<ReplicationResult> results(size_t(cfg.replications));
    const int threads = std::max(1, cfg.threads);
    if (threads == 1) {
      for (int r = 0; r < cfg.replications; ++r)
        results[size_t(r)] = run_replication(cfg, mech, r);
    } else {
      std::atomic<int> next{0};
      auto worker = [&]() {
        for (;;) {
          int r = next.fetch_add(1);
          if (r >= cfg.replications) return;
          results[size_t(r)] = run_replication(cfg, mech, r);
        }
      };
      std::vector<std::thread> pool;
      pool.reserve(size_t(threads));
      for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }

    std::map<std::string, double> full_emp_var;
    for (int pass = 0; pass < 2; ++pass) {
      for (Method m : cfg.methods) {
        if ((m == Method::FullData) != (pass == 0)) continue;
        std::vector<const MethodEstimate*> ok;
        int n_fail = 0;
        for (const auto& r : results) {
          auto it = r.estimates.find(m);
          if (it == r.estimates.end()) continue;
          if (it->second.ok)
            ok.push_back(&it->second);
          else
            ++n_fail;
        }
        if (ok.empty()) {
          StudyRow row;
          row.mechanism = label;
          row.method = m;
          row.coefficient = "-";
          row.n_fail = n_fail;
          report.rows.push_back(row);
          continue;
        }
        const auto& names = ok.front()->coef_names;
        for (size_t c = 0; c < names.size(); ++c) {
          if (!cfg.report_intercept && names[c] == "(intercept)") continue;
          double truth = scenario_truth(cfg.scenario, names[c]);
          double mean = 0.0;
          for (const auto* e : ok) mean += e->theta[Eigen::Index(c)];
          mean /= double(ok.size());
          double emp = 0.0;
          for (const auto* e : ok) {
            double d = e->theta[Eigen::Index(c)] - mean;
            emp += d * d;
          }
          emp = ok.size() > 1 ? emp / double(ok.size() - 1) : 0.0;
          if (m == Method::FullData) full_emp_var[names[c]] = emp;

          for (size_t v = 0; v < ok.front()->ses.size(); ++v) {
            StudyRow row;
            row.mechanism = label;
            row.method = m;
            row.variance = ok.front()->ses[v].first;
            row.coefficient = names[c];
            row.bias_x100 = (mean - truth) * 100.0;
            row.emp_var = emp;
            auto fv = full_emp_var.find(names[c]);
            row.rel_emp_var = fv != full_emp_var.end() && fv->second > 0.0
                                  ? emp / fv->second
                                  : std::numeric_limits<double>::quiet_NaN();
            double var_sum = 0.0;
            int covered = 0;
            for (const auto* e : ok) {
              double se = e->ses[v].second[Eigen::Index(c)];
              var_sum += se * se;
              if (std::abs(e->theta[Eigen::Index(c)] - truth) <= 1.96 * se) ++covered;
            }
            row.mean_est_var_x100 = var_sum / double(ok.size()) * 100.0;
            row.coverage_pct = 100.0 * double(covered) / double(ok.size());
            row.n_ok = int(ok.size());
            row.n_fail = n_fail;
            report.rows.push_back(row);
          }
        }
      }
    }
  }
  return report;
}

const StudyRow* StudyReport::find(const std::string& mechanism, Method method,
                                  VarianceMethod variance, const std::string& coefficient) const {
  for (const auto& row : rows)
    if (row.mechanism == mechanism && row.method == method && row.variance == variance &&
        row.coefficient == coefficient)
      return &row;
  return nullptr;
}

void write_report_csv(const StudyReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << "scenario,mechanism,method,variance_method,coefficient,bias_x100,emp_var,rel_emp_var,"
         "mean_est_var_x100,coverage_pct,n_fail\n";
  char buf[256];
  for (const auto& row : report.rows) {
    std::snprintf(buf, sizeof buf, "%d,%s,%s,%s,%s,%.6g,%.6g,%.6g,%.6g,%.6g,%d\n", report.scenario,
                  row.mechanism.c_str(), method_name(row.method).c_str(),
                  variance_method_name(row.variance).c_str(), row.coefficient.c_str(),
                  row.bias_x100, row.emp_var, row.rel_emp_var, row.mean_est_var_x100,
                  row.coverage_pct, row.n_fail);
    out << buf;
  }
}

std::string format_report_table(const StudyReport& report) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "scenario %d  n=%lld  replications=%d  M=%d\n", report.scenario,
                (long long)report.n, report.replications, report.imputations);
  out << buf;
  std::snprintf(buf, sizeof buf, "%-9s %-22s %-9s %-11s %9s %9s %8s %12s %7s %5s\n", "mechanism",
                "method", "variance", "coefficient", "bias*100", "emp_var", "rel_var",
                "est_var*100", "cover%", "fail");
  out << buf;
  for (const auto& row : report.rows) {
    std::snprintf(buf, sizeof buf, "%-9s %-22s %-9s %-11s %9.2f %9.5f %8.2f %12.3f %7.1f %5d\n",
                  row.mechanism.c_str(), method_name(row.method).c_str(),
                  variance_method_name(row.variance).c_str(), row.coefficient.c_str(),
                  row.bias_x100, row.emp_var, row.rel_emp_var, row.mean_est_var_x100,
                  row.coverage_pct, row.n_fail);
    out << buf;
  }
  return out.str();
}

}  // namespace stackmi
