#include <doctest.h>

#include <cmath>

#include "stackmi/errors.hpp"
#include "stackmi/imputer.hpp"
#include "stackmi/scenarios.hpp"
#include "stackmi/stack.hpp"
#include "stackmi/study.hpp"
#include "stackmi/variance.hpp"
#include "test_helpers.hpp"

using namespace stackmi;

namespace {

struct Scenario1Pieces {
  Table masked;
  std::vector<Table> tables;
  CompleteCaseFit cc;
};

Scenario1Pieces make_pieces(Eigen::Index n, int m, uint64_t seed,
                            std::array<double, 3> phi = {0.0, 0.0, 0.0}) {
  Table full = generate_scenario(1, n, Rng(seed, 0));
  Table masked =
      apply_missingness(full, scenario_mechanisms(1, phi[0], phi[1], phi[2]), Rng(seed + 1, 0));
  ChainConfig cfg;
  cfg.imputations = m;
  cfg.cycles = 3;
  auto tables = chained_impute(masked, scenario_imputers(1, false), cfg, Rng(seed + 2, 0), {"y"});
  CompleteCaseFit cc = complete_case_fit(masked, scenario_outcome(1));
  return {std::move(masked), std::move(tables), std::move(cc)};
}

}  // namespace

TEST_CASE("louis covariance reduces to the inverse information without missingness") {
  Table full = generate_scenario(1, 200, Rng(301, 0));
  std::vector<Table> copies = {full, full, full, full};
  for (StackMode mode : {StackMode::Short, StackMode::Tall}) {
    StackedTable s = unit_mi_weights(stack(copies, mode));
    Design d = build_design(scenario_outcome(1), s);
    FitResult fit = fit_weighted(d, s.weights);
    VarianceReport louis = louis_variance(s, fit);
    CHECK(louis.psd);
    Eigen::MatrixXd expected = fit.model_covariance();
    double rel = (louis.covariance - expected).norm() / expected.norm();
    CHECK(rel < 1e-10);
  }
}

TEST_CASE("identical imputations for every subject collapse the variance term") {
  auto p = make_pieces(150, 4, 310);
  std::vector<Table> copies(4, p.tables[0]);
  StackedTable s = unit_mi_weights(stack(copies, StackMode::Tall));
  Design d = build_design(scenario_outcome(1), s);
  FitResult fit = fit_weighted(d, s.weights);
  VarianceReport louis = louis_variance(s, fit);
  double rel = (louis.covariance - fit.model_covariance()).norm() / fit.model_covariance().norm();
  CHECK(rel < 1e-10);
}

TEST_CASE("louis variance dominates the naive model-based variance under missingness") {
  auto p = make_pieces(600, 20, 320);
  StackedTable s =
      compute_weights(stack(p.tables, StackMode::Short), p.cc, WeightMode::Mle, Rng(0, 0));
  Design d = build_design(scenario_outcome(1), s);
  FitResult fit = fit_weighted(d, s.weights);
  VarianceReport louis = louis_variance(s, fit);
  Eigen::MatrixXd naive = fit.model_covariance();
  for (Eigen::Index j = 0; j < naive.rows(); ++j)
    CHECK(louis.covariance(j, j) >= naive(j, j) - 1e-12);
}

TEST_CASE("louis variance is identical across tall and short stacks") {
  auto p = make_pieces(250, 8, 330);
  StackedTable tall =
      compute_weights(stack(p.tables, StackMode::Tall), p.cc, WeightMode::Mle, Rng(0, 0));
  StackedTable shrt =
      compute_weights(stack(p.tables, StackMode::Short), p.cc, WeightMode::Mle, Rng(0, 0));
  Design dt = build_design(scenario_outcome(1), tall);
  Design ds = build_design(scenario_outcome(1), shrt);
  FitResult ft = fit_weighted(dt, tall.weights);
  FitResult fs = fit_weighted(ds, shrt.weights);
  CHECK((ft.theta - fs.theta).lpNorm<Eigen::Infinity>() < 1e-10);
  VarianceReport lt = louis_variance(tall, ft);
  VarianceReport ls = louis_variance(shrt, fs);
  CHECK((lt.se - ls.se).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("sandwich reduces to the classical estimator for one row per subject") {
  Table full = generate_scenario(1, 120, Rng(340, 0));
  std::vector<Table> copies = {full, full};
  StackedTable s = stack(copies, StackMode::Short);  // every subject once
  REQUIRE(s.n_rows() == 120);
  s = unit_mi_weights(s);
  Design d = build_design(scenario_outcome(1), s);
  FitResult fit = fit_weighted(d, s.weights);
  VarianceReport sand = sandwich_variance(s, fit);

  Eigen::MatrixXd bread = fit.model_covariance();
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(3, 3);
  for (Eigen::Index r = 0; r < d.n_rows(); ++r) {
    Eigen::VectorXd u = fit.row_scores.row(r).transpose();
    meat += u * u.transpose();
  }
  Eigen::MatrixXd expected = bread * meat * bread;
  CHECK((sand.covariance - expected).norm() / expected.norm() < 1e-12);
  CHECK(meat.trace() > 0.0);
}

TEST_CASE("sandwich diagonal sits below louis on stacked weighted fits") {
  int wins = 0, total = 0;
  for (uint64_t seed : {350u, 360u, 370u, 380u, 390u}) {
    auto p = make_pieces(400, 15, seed, {0.0, 1.0, 0.0});
    StackedTable s =
        compute_weights(stack(p.tables, StackMode::Short), p.cc, WeightMode::Mle, Rng(0, 0));
    Design d = build_design(scenario_outcome(1), s);
    FitResult fit = fit_weighted(d, s.weights);
    VarianceReport louis = louis_variance(s, fit);
    VarianceReport sand = sandwich_variance(s, fit);
    for (Eigen::Index j = 0; j < 3; ++j) {
      ++total;
      if (sand.covariance(j, j) < louis.covariance(j, j)) ++wins;
    }
  }
  CHECK(wins >= int(0.95 * total));
}

TEST_CASE("wood scaling: no missingness leaves the model covariance untouched") {
  auto p = make_pieces(200, 5, 400);
  StackedTable s =
      compute_weights(stack(p.tables, StackMode::Short), p.cc, WeightMode::Mle, Rng(0, 0));
  Design d = build_design(scenario_outcome(1), s);
  FitResult fit = fit_weighted(d, s.weights);

  VarianceReport untouched = wood_variance(s, fit, Eigen::VectorXd::Zero(3));
  CHECK((untouched.covariance - fit.model_covariance()).norm() < 1e-12);

  // a coefficient with half its subjects missing doubles its variance
  Eigen::VectorXd f(3);
  f << 0.0, 0.0, 0.5;
  VarianceReport scaled = wood_variance(s, fit, f);
  CHECK(scaled.covariance(2, 2) ==
        doctest::Approx(2.0 * fit.model_covariance()(2, 2)).epsilon(1e-12));
  CHECK(scaled.covariance(0, 0) == doctest::Approx(fit.model_covariance()(0, 0)).epsilon(1e-12));
  // off-diagonals pick up the geometric mean of the two factors
  CHECK(scaled.covariance(0, 2) ==
        doctest::Approx(std::sqrt(2.0) * fit.model_covariance()(0, 2)).epsilon(1e-12));

  Eigen::VectorXd bad(3);
  bad << 0.0, 0.0, 1.0;
  CHECK_THROWS_AS(wood_variance(s, fit, bad), InputError);
}

TEST_CASE("coefficient missing fractions follow the mask") {
  auto p = make_pieces(2000, 3, 410);
  Eigen::VectorXd f = coefficient_missing_fractions(p.masked, scenario_outcome(1));
  REQUIRE(f.size() == 3);
  CHECK(f[0] == 0.0);  // intercept
  CHECK(f[1] == 0.0);  // x1 fully observed
  CHECK(std::abs(f[2] - 0.5) < 0.05);

  // interactions inherit missingness from either parent column
  Eigen::VectorXd f3 = coefficient_missing_fractions(p.masked, scenario_outcome(3));
  REQUIRE(f3.size() == 4);
  CHECK(f3[3] == f3[2]);  // x1:x2 misses exactly when x2 does
}

TEST_CASE("rubin combination arithmetic") {
  std::vector<Eigen::VectorXd> thetas = {Eigen::VectorXd::Constant(1, 1.0),
                                         Eigen::VectorXd::Constant(1, 2.0),
                                         Eigen::VectorXd::Constant(1, 3.0)};
  std::vector<Eigen::MatrixXd> covs(3, Eigen::MatrixXd::Identity(1, 1));
  RubinResult r = rubin_combine(thetas, covs, {"a"});
  CHECK(r.pooled[0] == doctest::Approx(2.0));
  // within 1, between 1, total 1 + (1 + 1/3) = 7/3
  CHECK(r.report.covariance(0, 0) == doctest::Approx(7.0 / 3.0).epsilon(1e-12));

  std::vector<Eigen::VectorXd> same(4, Eigen::VectorXd::Constant(1, 1.5));
  std::vector<Eigen::MatrixXd> w(4, Eigen::MatrixXd::Identity(1, 1) * 0.25);
  RubinResult r2 = rubin_combine(same, w);
  CHECK(r2.report.covariance(0, 0) == doctest::Approx(0.25).epsilon(1e-12));

  CHECK_THROWS_AS(rubin_combine({thetas[0]}, {covs[0]}), InputError);
  std::vector<Eigen::VectorXd> mismatch = {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(2)};
  CHECK_THROWS_AS(rubin_combine(mismatch, {covs[0], covs[1]}), InputError);
}

TEST_CASE("non-positive-definite observed information is flagged and clipped") {
  // two subjects, two imputations, scores crafted so the within-subject score
  // variance exceeds the weighted information
  StackedTable s;
  s.columns = {{"x", ColumnRole::Continuous, 0}};
  s.values = Eigen::MatrixXd::Zero(4, 1);
  s.subject = {0, 0, 1, 1};
  s.imputation = {1, 2, 1, 2};
  s.mode = StackMode::Tall;
  s.m_imputations = 2;
  s.n_subjects = 2;
  s.weights = Eigen::VectorXd::Constant(4, 0.5);

  FitResult fit;
  fit.family = Family::Gaussian;
  fit.theta = Eigen::VectorXd::Zero(1);
  fit.coef_names = {"x"};
  fit.weighted_information = Eigen::MatrixXd::Identity(1, 1) * 0.1;
  fit.row_scores = Eigen::MatrixXd(4, 1);
  fit.row_scores << 2.0, -2.0, 1.5, -1.5;
  fit.row_info_packed = Eigen::MatrixXd::Zero(4, 1);

  VarianceReport rep = louis_variance(s, fit);
  CHECK_FALSE(rep.psd);
  CHECK(rep.clipped_eigenvalues == 1);
  CHECK(std::isfinite(rep.se[0]));
}
