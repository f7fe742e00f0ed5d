#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stackmi/table.hpp"

namespace stackmi {

enum class Family { Gaussian, Bernoulli, Cox };

std::string family_name(Family f);
Family parse_family(const std::string& text);

struct InteractionTerm {
  std::string a, b;
};

// Analysis model description: family, response column(s) and design terms.
// The intercept is forced off for Cox.
struct OutcomeSpec {
  Family family = Family::Gaussian;
  std::string response;             // gaussian / bernoulli
  std::string time, event;          // cox
  std::vector<std::string> terms;   // main-effect columns
  std::vector<InteractionTerm> interactions;
  bool intercept = true;

  bool has_intercept() const { return family != Family::Cox && intercept; }
  std::vector<std::string> response_columns() const;
  std::vector<std::string> referenced_columns() const;  // response + design columns
  void validate(const std::vector<ColumnSpec>& schema) const;
};

// Design matrix plus response extracted from a value grid. Each coefficient
// records the table columns it is built from, so missingness fractions can be
// attributed per coefficient.
struct Design {
  Family family = Family::Gaussian;
  Eigen::MatrixXd X;                           // rows x q
  std::vector<std::string> coef_names;
  std::vector<std::vector<Eigen::Index>> coef_sources;  // table column indices
  Eigen::VectorXd y;     // gaussian / bernoulli
  Eigen::VectorXd time;  // cox
  Eigen::VectorXd event; // cox, 0/1

  Eigen::Index n_rows() const { return X.rows(); }
  Eigen::Index n_coefs() const { return X.cols(); }
};

Design build_design(const OutcomeSpec& spec, const std::vector<ColumnSpec>& schema,
                    const Eigen::MatrixXd& values);
inline Design build_design(const OutcomeSpec& spec, const Table& table) {
  return build_design(spec, table.columns(), table.values());
}

// Predictor matrix with leading intercept for imputation models: categorical
// predictors are expanded to reference-cell dummies (code 0 as reference).
Eigen::MatrixXd predictor_matrix(const std::vector<ColumnSpec>& schema,
                                 const Eigen::MatrixXd& values,
                                 const std::vector<Eigen::Index>& rows,
                                 const std::vector<Eigen::Index>& predictor_cols);

}  // namespace stackmi
