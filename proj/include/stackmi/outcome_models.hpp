#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stackmi/design.hpp"

namespace stackmi {

struct FitOptions {
  int max_iterations = 100;
  double loglik_tol = 1e-10;   // relative log-likelihood change
  double score_tol = 1e-6;     // max-norm of weighted score (x n for cox)
  double coef_bound = 1e3;     // separation guard
};

// Weighted maximum-likelihood fit with per-row score and information
// contributions. row_scores holds the unweighted per-row score U_r; the
// packed row information stores the unweighted J_r (lower triangle, row-major)
// so that sum_r w_r J_r = weighted_information.
struct FitResult {
  Family family = Family::Gaussian;
  Eigen::VectorXd theta;
  double sigma2 = std::numeric_limits<double>::quiet_NaN();  // gaussian only
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<std::string> coef_names;
  Eigen::MatrixXd row_scores;          // rows x q
  Eigen::MatrixXd row_info_packed;     // rows x q(q+1)/2
  Eigen::MatrixXd weighted_information;  // q x q

  Eigen::MatrixXd row_information(Eigen::Index r) const;
  Eigen::MatrixXd model_covariance() const;  // inverse of weighted information
};

FitResult fit_weighted(const Design& design, const Eigen::VectorXd& weights,
                       const FitOptions& options = {});
FitResult fit_unweighted(const Design& design, const FitOptions& options = {});

// Log-likelihood, score and information at an arbitrary theta (and sigma2 for
// gaussian); used by the finite-difference oracle and the Newton solvers.
double weighted_loglik(const Design& design, const Eigen::VectorXd& weights,
                       const Eigen::VectorXd& theta, double sigma2);
void score_information(const Design& design, const Eigen::VectorXd& weights,
                       const Eigen::VectorXd& theta, double sigma2,
                       Eigen::VectorXd* score, Eigen::MatrixXd* information);

// Step cumulative hazard with the piecewise-constant rate that integrates to
// it. Lookups beyond the last event time use the last interval's rate and a
// flat cumulative hazard.
struct BaselineHazard {
  Eigen::VectorXd times;   // distinct event times, ascending
  Eigen::VectorXd cumhaz;  // cumulative hazard at times
  Eigen::VectorXd rate;    // constant rate on (t_{k-1}, t_k], t_0 = 0

  double cumhaz_at(double t) const;
  double rate_at(double t) const;
};

BaselineHazard breslow_baseline(const Design& design, const Eigen::VectorXd& weights,
                                const Eigen::VectorXd& theta);

// Log of f(response | x; theta) for one design row. Cox rows need a baseline;
// gaussian rows need sigma2.
double log_density_row(const Design& design, Eigen::Index row, const Eigen::VectorXd& theta,
                       double sigma2, const BaselineHazard* baseline);
double density_row(const Design& design, Eigen::Index row, const Eigen::VectorXd& theta,
                   double sigma2, const BaselineHazard* baseline);

struct FiniteDiffReport {
  double score_discrepancy = 0.0;
  double information_discrepancy = 0.0;
};

// Central finite differences of the implemented log-likelihood against the
// analytic score, and of the analytic score against the information matrix.
// Discrepancies are max over coordinates of |analytic - numeric| / (1 + |numeric|).
FiniteDiffReport finite_diff_check(const Design& design, const Eigen::VectorXd& weights,
                                   const Eigen::VectorXd& theta, double sigma2,
                                   double step = 1e-5);

}  // namespace stackmi
