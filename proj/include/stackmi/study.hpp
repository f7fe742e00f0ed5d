#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stackmi/imputer.hpp"
#include "stackmi/scenarios.hpp"
#include "stackmi/stack.hpp"
#include "stackmi/variance.hpp"

namespace stackmi {

// Estimation pipelines compared by the replication engine.
enum class Method {
  FullData,         // fit on the pre-mask data
  CompleteCase,     // fit on fully observed rows
  MiceYRubin,       // impute using the outcome, combine with Rubin's rules
  MiceYStackUnit,   // same imputations, stacked with 1/appearances weights
  MiceNoYRubin,     // impute ignoring the outcome, Rubin's rules
  Proposed,         // impute ignoring the outcome, stack, density weights
  ProposedDraw,     // density weights from per-imputation parameter draws
  MiceMultinomial,  // select one imputation per subject by outcome density
};

std::string method_name(Method m);
Method parse_method(const std::string& text);
const std::vector<Method>& all_methods();

struct StudyConfig {
  int scenario = 1;
  Eigen::Index n = 2000;
  int replications = 500;
  int imputations = 50;
  int cycles = 10;
  std::vector<std::array<double, 3>> mechanisms;  // phi vectors for x2
  std::vector<Method> methods = all_methods();
  std::vector<VarianceMethod> stacked_variances = {VarianceMethod::Louis};
  StackMode stack_mode = StackMode::Tall;
  uint64_t seed = 0;
  int threads = 1;
  int max_failures = 0;
  bool report_intercept = false;
};

struct MethodEstimate {
  bool ok = false;
  std::string error;
  Eigen::VectorXd theta;
  std::vector<std::string> coef_names;
  std::vector<std::pair<VarianceMethod, Eigen::VectorXd>> ses;
};

struct ReplicationResult {
  std::map<Method, MethodEstimate> estimates;
};

// One seeded replication: generate, mask, then run every requested pipeline.
// Failures are captured per method, never thrown.
ReplicationResult run_replication(const StudyConfig& cfg, size_t mechanism_index, int rep);

struct StudyRow {
  std::string mechanism;
  Method method = Method::FullData;
  VarianceMethod variance = VarianceMethod::Model;
  std::string coefficient;
  double bias_x100 = 0.0;
  double emp_var = 0.0;
  double rel_emp_var = 0.0;
  double mean_est_var_x100 = 0.0;
  double coverage_pct = 0.0;
  int n_ok = 0;
  int n_fail = 0;
};

struct StudyReport {
  int scenario = 1;
  Eigen::Index n = 0;
  int replications = 0;
  int imputations = 0;
  std::vector<StudyRow> rows;

  const StudyRow* find(const std::string& mechanism, Method method, VarianceMethod variance,
                       const std::string& coefficient) const;
};

StudyReport run_study(const StudyConfig& cfg);

void write_report_csv(const StudyReport& report, const std::string& path);
std::string format_report_table(const StudyReport& report);

// Analysis model, generating-model coefficient values and imputation models
// for the built-in scenarios.
OutcomeSpec scenario_outcome(int id);
double scenario_truth(int id, const std::string& coefficient);
std::vector<ImputerSpec> scenario_imputers(int id, bool include_outcome);

// Appends a fully observed column holding the Nelson-Aalen cumulative hazard
// estimate evaluated at each row's time; used by outcome-aware imputation of
// survival data.
Table append_nelson_aalen(const Table& table, const std::string& time_col,
                          const std::string& event_col, const std::string& new_col);

}  // namespace stackmi
