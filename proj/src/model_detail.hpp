#pragma once

// Internal declarations shared between the GLM and Cox translation units.

#include <Eigen/Dense>

#include "stackmi/outcome_models.hpp"

namespace stackmi::detail {

inline Eigen::Index packed_size(Eigen::Index q) { return q * (q + 1) / 2; }
inline Eigen::Index packed_index(Eigen::Index i, Eigen::Index j) {
  // lower triangle, i >= j
  return i * (i + 1) / 2 + j;
}

using PackedRowRef = Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;
void pack_symmetric(const Eigen::MatrixXd& m, PackedRowRef out);

// log(1 + exp(x)) without overflow
inline double log1pexp(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

// Kahan-compensated vector accumulator. Score sums cancel almost exactly at
// the optimum, so naive summation noise (~n * eps * |terms|) would put a floor
// above the convergence tolerance on large stacked fits.
class CompensatedSum {
 public:
  explicit CompensatedSum(Eigen::Index n)
      : sum_(Eigen::VectorXd::Zero(n)), comp_(Eigen::VectorXd::Zero(n)) {}

  void add(const Eigen::VectorXd& term) {
    for (Eigen::Index i = 0; i < sum_.size(); ++i) {
      double y = term[i] - comp_[i];
      double t = sum_[i] + y;
      comp_[i] = (t - sum_[i]) - y;
      sum_[i] = t;
    }
  }

  const Eigen::VectorXd& value() const { return sum_; }

 private:
  Eigen::VectorXd sum_, comp_;
};

void validate_weights(const Eigen::VectorXd& w, Eigen::Index rows);

FitResult fit_gaussian(const Design& d, const Eigen::VectorXd& w, const FitOptions& opt);
FitResult fit_bernoulli(const Design& d, const Eigen::VectorXd& w, const FitOptions& opt);
FitResult fit_cox(const Design& d, const Eigen::VectorXd& w, const FitOptions& opt);

double cox_loglik(const Design& d, const Eigen::VectorXd& w, const Eigen::VectorXd& theta);
void cox_score_information(const Design& d, const Eigen::VectorXd& w,
                           const Eigen::VectorXd& theta, Eigen::VectorXd* score,
                           Eigen::MatrixXd* information);

// Rank check of sqrt(w)-scaled design; throws NumericError when deficient.
void require_full_rank(const Eigen::MatrixXd& X, const Eigen::VectorXd& w);

}  // namespace stackmi::detail
