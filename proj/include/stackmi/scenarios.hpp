#pragma once

#include <vector>

#include <Eigen/Dense>

#include "stackmi/rng.hpp"
#include "stackmi/table.hpp"

namespace stackmi {

// Multivariate normal sampler; the covariance must be symmetric positive
// definite (checked via Cholesky at construction).
class MvNormal {
 public:
  explicit MvNormal(const Eigen::MatrixXd& covariance);
  Eigen::VectorXd sample(Rng& rng) const;

 private:
  Eigen::MatrixXd chol_;  // lower factor
};

// Built-in simulation designs:
//   1: gaussian y on two correlated covariates, x2 incomplete
//   2: bernoulli y on three correlated covariates, x2 and x3 incomplete
//   3: gaussian y with an x1*x2 interaction, x2 incomplete
//   4: censored exponential survival time, x2 incomplete
Table generate_scenario(int id, Eigen::Index n, Rng rng);

// Missingness mechanisms for a scenario given the logistic coefficients
// (phi0, phi1 on x1, phi2 on the outcome) of the x2 observation model.
// Scenario 2 adds its fixed 30% MCAR mechanism on x3; scenario 4 ignores phi2.
std::vector<MissingnessMechanism> scenario_mechanisms(int id, double phi0, double phi1,
                                                      double phi2);

// Short label for a mechanism: "MCAR", "X1", "Y" or "X1,Y".
std::string mechanism_label(double phi1, double phi2);

}  // namespace stackmi
