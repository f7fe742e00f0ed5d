#include <doctest.h>

#include <cmath>

#include "stackmi/design.hpp"
#include "stackmi/errors.hpp"
#include "stackmi/outcome_models.hpp"
#include "stackmi/scenarios.hpp"
#include "stackmi/study.hpp"

using namespace stackmi;

namespace {

double column_mean(const Table& t, const std::string& name) {
  return t.values().col(t.column_index(name)).mean();
}

double column_var(const Table& t, const std::string& name) {
  Eigen::VectorXd c = t.values().col(t.column_index(name));
  double m = c.mean();
  return (c.array() - m).square().sum() / double(c.size() - 1);
}

double column_cov(const Table& t, const std::string& a, const std::string& b) {
  Eigen::VectorXd ca = t.values().col(t.column_index(a));
  Eigen::VectorXd cb = t.values().col(t.column_index(b));
  return ((ca.array() - ca.mean()) * (cb.array() - cb.mean())).sum() / double(ca.size() - 1);
}

}  // namespace

TEST_CASE("mvnormal rejects non-spd covariance") {
  Eigen::Matrix2d bad;
  bad << 1.0, 2.0, 2.0, 1.0;  // indefinite
  CHECK_THROWS_AS(MvNormal{bad}, InputError);
  Eigen::Matrix2d asym;
  asym << 1.0, 0.2, 0.3, 1.0;
  CHECK_THROWS_AS(MvNormal{asym}, InputError);
}

TEST_CASE("scenario generation is seed-deterministic") {
  Table a = generate_scenario(1, 50, Rng(77, 0));
  Table b = generate_scenario(1, 50, Rng(77, 0));
  Table c = generate_scenario(1, 50, Rng(78, 0));
  CHECK(a.values() == b.values());
  CHECK(a.values() != c.values());
  CHECK_THROWS_AS(generate_scenario(5, 50, Rng(0, 0)), InputError);
}

TEST_CASE("scenario 1 covariate moments") {
  Table t = generate_scenario(1, 200000, Rng(101, 0));
  CHECK(column_var(t, "x1") == doctest::Approx(0.49).epsilon(0.01));
  CHECK(std::abs(column_var(t, "x2") - 0.09) < 0.002);
  CHECK(std::abs(column_cov(t, "x1", "x2") - 0.12) < 0.002);
  // residual variance of y given x
  Eigen::VectorXd resid = t.values().col(t.column_index("y")) -
                          0.53 * t.values().col(t.column_index("x1")) -
                          1.25 * t.values().col(t.column_index("x2"));
  double rv = (resid.array() - resid.mean()).square().sum() / double(t.n_rows() - 1);
  CHECK(std::abs(rv - 0.55) < 0.01);
}

TEST_CASE("scenario 2 covariate correlation and outcome rate") {
  Table t = generate_scenario(2, 200000, Rng(202, 0));
  double corr = column_cov(t, "x1", "x2") /
                std::sqrt(column_var(t, "x1") * column_var(t, "x2"));
  CHECK(std::abs(corr - 0.3) < 0.01);
  double rate = column_mean(t, "y");
  CHECK(rate > 0.55);
  CHECK(rate < 0.65);
}

TEST_CASE("scenario 3 moments") {
  Table t = generate_scenario(3, 200000, Rng(33, 0));
  CHECK(std::abs(column_var(t, "x1") - 0.81) < 0.01);
  CHECK(std::abs(column_var(t, "x2") - 1.21) < 0.015);
  CHECK(std::abs(column_cov(t, "x1", "x2") - 0.59) < 0.01);
}

TEST_CASE("scenario 4 log-hazard recovered by a large-sample fit") {
  Table t = generate_scenario(4, 200000, Rng(44, 0));
  FitResult fit = fit_unweighted(build_design(scenario_outcome(4), t));
  CHECK(std::abs(fit.theta[0] - 0.5) < 0.02);
  CHECK(std::abs(fit.theta[1] - 0.5) < 0.02);
  // censoring leaves a real mix of events and censorings
  double events = column_mean(t, "event");
  CHECK(events > 0.3);
  CHECK(events < 0.9);
}

TEST_CASE("scenario 1 mechanism hides about half of x2") {
  Table t = generate_scenario(1, 100000, Rng(55, 0));
  Table masked = apply_missingness(t, scenario_mechanisms(1, 0.0, 0.0, 0.0), Rng(56, 0));
  double frac = double(masked.missing_count(masked.column_index("x2"))) / double(masked.n_rows());
  CHECK(std::abs(frac - 0.5) < 0.01);

  // mechanisms that depend on x1 and y keep the rate near one half by symmetry
  Table m2 = apply_missingness(t, scenario_mechanisms(1, 0.0, 1.0, -1.0), Rng(57, 0));
  double frac2 = double(m2.missing_count(m2.column_index("x2"))) / double(m2.n_rows());
  CHECK(std::abs(frac2 - 0.5) < 0.02);
}

TEST_CASE("scenario 2 complete-case fraction matches the mechanism arithmetic") {
  // P(x2 observed) = expit(0.5) = 0.6225, P(x3 observed) = 0.7, independent:
  // complete fraction = 0.4357
  Table t = generate_scenario(2, 100000, Rng(66, 0));
  Table masked = apply_missingness(t, scenario_mechanisms(2, 0.5, 0.0, 0.0), Rng(67, 0));
  double cc = double(masked.n_complete_rows()) / double(masked.n_rows());
  CHECK(std::abs(cc - 0.4357) < 0.015);
}

TEST_CASE("mechanism labels") {
  CHECK(mechanism_label(0.0, 0.0) == "MCAR");
  CHECK(mechanism_label(1.0, 0.0) == "X1");
  CHECK(mechanism_label(0.0, 1.0) == "Y");
  CHECK(mechanism_label(1.0, -1.0) == "X1,Y");
}
