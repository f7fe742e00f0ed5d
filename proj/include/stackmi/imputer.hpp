#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stackmi/design.hpp"
#include "stackmi/outcome_models.hpp"
#include "stackmi/rng.hpp"
#include "stackmi/table.hpp"

namespace stackmi {

enum class ImputerFamily { BayesLinear, BayesLogistic, BayesMultinomial };

ImputerFamily default_imputer_family(ColumnRole role);
std::string imputer_family_name(ImputerFamily f);
ImputerFamily parse_imputer_family(const std::string& text);

// Conditional model for one incomplete column. Predictors must not include
// the target; when an outcome-exclusion list is supplied to the chain, they
// must not include those columns either.
struct ImputerSpec {
  std::string target;
  std::vector<std::string> predictors;
  ImputerFamily family = ImputerFamily::BayesLinear;
};

struct ChainConfig {
  int imputations = 2;   // M
  int cycles = 10;
  std::vector<std::string> visit_order;  // empty: ascending missing count
};

// Posterior / asymptotic draw of one imputation model's parameters.
struct ImputerDraw {
  ImputerFamily family = ImputerFamily::BayesLinear;
  Eigen::MatrixXd coef;   // q x 1, or q x (k-1) for multinomial
  double sigma2 = std::numeric_limits<double>::quiet_NaN();  // linear only
  int levels = 0;         // multinomial only
};

// Fits the imputation model on rows where target and all predictors are
// observed and draws parameters: exact normal-inverse-chi-square posterior for
// the linear family, asymptotic normal around the MLE otherwise.
ImputerDraw draw_imputer(const Table& table, const ImputerSpec& spec, Rng rng);

// Chained-equations imputation of the spec'd columns. Each imputation starts
// from marginal draws, then runs `cycles` sweeps where each model is refit on
// rows whose target was originally observed, using the currently completed
// predictor values, and missing cells are redrawn from the fitted predictive
// distribution. Returns M tables whose spec'd columns are fully observed.
// Columns named in outcome_columns may not appear in any spec.
std::vector<Table> chained_impute(const Table& table, const std::vector<ImputerSpec>& specs,
                                  const ChainConfig& config, Rng rng,
                                  const std::vector<std::string>& outcome_columns = {});

// Fills missing response cells from the outcome model at drawn parameters.
// Supported for gaussian and bernoulli outcomes; covariates must be complete.
struct OutcomeDraw {
  Eigen::VectorXd theta;
  double sigma2 = std::numeric_limits<double>::quiet_NaN();
};
Table impute_outcome(const Table& completed, const OutcomeSpec& outcome, const OutcomeDraw& draw,
                     Rng rng);
OutcomeDraw draw_outcome_params(const Table& table, const OutcomeSpec& outcome, Rng rng);

// Picks one candidate row per subject with probability proportional to the
// candidate's outcome density (given per subject as log densities across the
// M candidate tables) and assembles the selected rows into a single table.
Table multinomial_select(const std::vector<Table>& candidates,
                         const Eigen::MatrixXd& log_densities, Rng rng);

}  // namespace stackmi
