#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stackmi/outcome_models.hpp"
#include "stackmi/stack.hpp"
#include "stackmi/table.hpp"

namespace stackmi {

enum class VarianceMethod { Louis, Sandwich, Wood, Rubin, Model };

std::string variance_method_name(VarianceMethod m);
VarianceMethod parse_variance_method(const std::string& text);

struct VarianceReport {
  VarianceMethod method = VarianceMethod::Model;
  Eigen::MatrixXd covariance;
  Eigen::VectorXd se;
  std::vector<std::string> coef_names;
  bool psd = true;        // observed information was positive definite
  int clipped_eigenvalues = 0;
};

// Observed-information variance for a weighted stacked fit: the weighted
// complete-data information minus the within-subject weighted variance of the
// per-row score contributions, inverted. A non-PD estimate is flagged and its
// eigenvalues are clipped before inversion.
VarianceReport louis_variance(const StackedTable& stacked, const FitResult& fit);

// Conventional sandwich A^-1 B A^-1 applied to the weighted stack: A is the
// weighted information and B sums the outer products of the weighted per-row
// scores, treating every stacked row as an independent observation. It
// captures within-imputation variation only, which is exactly why it is kept
// as a comparator.
VarianceReport sandwich_variance(const StackedTable& stacked, const FitResult& fit);

// Model-based covariance of the weighted fit with the variance of each
// coefficient inflated for its covariate's missingness fraction; fully
// observed coefficients are left unscaled. Off-diagonals get the geometric
// mean of the two factors.
VarianceReport wood_variance(const StackedTable& stacked, const FitResult& fit,
                             const Eigen::VectorXd& missing_fractions);

// Fraction of subjects missing any column that feeds each design coefficient,
// evaluated on the pre-imputation table.
Eigen::VectorXd coefficient_missing_fractions(const Table& masked, const OutcomeSpec& spec);

struct RubinResult {
  Eigen::VectorXd pooled;
  VarianceReport report;
};

// Rubin's rules: pooled estimate is the mean across imputations; covariance
// is the mean within-imputation covariance plus (1 + 1/M) times the
// between-imputation covariance.
RubinResult rubin_combine(const std::vector<Eigen::VectorXd>& estimates,
                          const std::vector<Eigen::MatrixXd>& covariances,
                          const std::vector<std::string>& coef_names = {});

void write_estimates_csv(const std::string& path, const std::vector<std::string>& coef_names,
                         const Eigen::VectorXd& estimates,
                         const std::vector<VarianceReport>& reports);

}  // namespace stackmi
