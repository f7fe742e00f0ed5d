#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "stackmi/errors.hpp"
#include "stackmi/imputer.hpp"
#include "stackmi/scenarios.hpp"
#include "stackmi/study.hpp"
#include "test_helpers.hpp"

using namespace stackmi;

namespace {

std::vector<ColumnSpec> xyz_schema() {
  return {{"x1", ColumnRole::Continuous, 0},
          {"x2", ColumnRole::Continuous, 0},
          {"y", ColumnRole::Continuous, 0}};
}

Table masked_scenario1(Eigen::Index n, uint64_t seed) {
  Table full = generate_scenario(1, n, Rng(seed, 0));
  return apply_missingness(full, scenario_mechanisms(1, 0.0, 0.0, 0.0), Rng(seed + 1, 0));
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double ks = 0.0;
  size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j])
      ++i;
    else
      ++j;
    ks = std::max(ks, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return ks;
}

}  // namespace

TEST_CASE("draw_imputer is deterministic given a seed") {
  Table t = masked_scenario1(500, 7);
  ImputerSpec spec{"x2", {"x1"}, ImputerFamily::BayesLinear};
  ImputerDraw a = draw_imputer(t, spec, Rng(3, 0));
  ImputerDraw b = draw_imputer(t, spec, Rng(3, 0));
  CHECK(a.coef == b.coef);
  CHECK(a.sigma2 == b.sigma2);
  CHECK(a.sigma2 > 0.0);
  ImputerDraw c = draw_imputer(t, spec, Rng(4, 0));
  CHECK(a.coef != c.coef);
}

TEST_CASE("draw_imputer rejects a constant target") {
  Eigen::MatrixXd v(30, 3);
  Rng g(5, 0);
  for (int i = 0; i < 30; ++i) {
    v(i, 0) = g.normal();
    v(i, 1) = 3.25;  // constant
    v(i, 2) = g.normal();
  }
  Table t = Table::fully_observed(xyz_schema(), v);
  ImputerSpec spec{"x2", {"x1"}, ImputerFamily::BayesLinear};
  CHECK_THROWS_MSG(draw_imputer(t, spec, Rng(0, 0)), NumericError, "singular design");
}

TEST_CASE("draw_imputer needs enough complete rows") {
  Eigen::MatrixXd v(3, 3);
  v << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  Table t = Table::fully_observed(xyz_schema(), v);
  ImputerSpec spec{"x2", {"x1"}, ImputerFamily::BayesLinear};
  CHECK_THROWS_MSG(draw_imputer(t, spec, Rng(0, 0)), NumericError, "insufficient complete rows");
}

TEST_CASE("linear imputer draws concentrate on the generating coefficients") {
  const Eigen::Index n = 50000;
  Rng g(11, 0);
  Eigen::MatrixXd v(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    double a = g.normal(), b = g.normal();
    v(i, 0) = a;
    v(i, 1) = b;
    v(i, 2) = a - b + g.normal();  // target y: intercept 0, slopes (1,-1)
  }
  Table t = Table::fully_observed(xyz_schema(), v);
  ImputerSpec spec{"y", {"x1", "x2"}, ImputerFamily::BayesLinear};
  ImputerDraw draw = draw_imputer(t, spec, Rng(12, 0));
  // oracle: the least-squares solution on the same data
  REQUIRE(draw.coef.rows() == 3);
  CHECK(std::abs(draw.coef(0, 0) - 0.0) < 0.05);
  CHECK(std::abs(draw.coef(1, 0) - 1.0) < 0.05);
  CHECK(std::abs(draw.coef(2, 0) + 1.0) < 0.05);
  CHECK(std::abs(draw.sigma2 - 1.0) < 0.05);
}

TEST_CASE("chained imputation of a complete table yields identical copies") {
  Table full = generate_scenario(1, 50, Rng(21, 0));
  ChainConfig cfg;
  cfg.imputations = 4;
  auto tables = chained_impute(full, scenario_imputers(1, false), cfg, Rng(22, 0), {"y"});
  REQUIRE(tables.size() == 4);
  for (const auto& t : tables) {
    CHECK(t.values() == full.values());
    CHECK(t.mask().all());
  }
}

TEST_CASE("chained imputation completes the covariates and keeps observed cells") {
  Table masked = masked_scenario1(400, 31);
  ChainConfig cfg;
  cfg.imputations = 3;
  cfg.cycles = 5;
  auto tables = chained_impute(masked, scenario_imputers(1, false), cfg, Rng(32, 0), {"y"});
  REQUIRE(tables.size() == 3);
  Eigen::Index x2 = masked.column_index("x2");
  for (const auto& t : tables) {
    CHECK(t.mask().all());
    for (Eigen::Index i = 0; i < t.n_rows(); ++i)
      for (Eigen::Index j = 0; j < t.n_cols(); ++j)
        if (masked.observed(i, j)) CHECK(t.value(i, j) == masked.value(i, j));
    // imputed cells differ from the (hidden) truth in general
    bool any_diff = false;
    for (Eigen::Index i = 0; i < t.n_rows(); ++i)
      if (!masked.observed(i, x2) && t.value(i, x2) != masked.shadow_truth()(i, x2))
        any_diff = true;
    CHECK(any_diff);
  }
  // determinism
  auto again = chained_impute(masked, scenario_imputers(1, false), cfg, Rng(32, 0), {"y"});
  for (size_t m = 0; m < tables.size(); ++m) CHECK(tables[m].values() == again[m].values());
}

TEST_CASE("mcar imputation reproduces the observed marginal") {
  Table masked = masked_scenario1(2000, 41);
  ChainConfig cfg;
  cfg.imputations = 50;
  auto tables = chained_impute(masked, scenario_imputers(1, false), cfg, Rng(42, 0), {"y"});
  Eigen::Index x2 = masked.column_index("x2");
  double obs_sum = 0.0, obs_n = 0.0, imp_sum = 0.0, imp_n = 0.0;
  for (Eigen::Index i = 0; i < masked.n_rows(); ++i) {
    if (masked.observed(i, x2)) {
      obs_sum += masked.value(i, x2);
      obs_n += 1.0;
    } else {
      for (const auto& t : tables) {
        imp_sum += t.value(i, x2);
        imp_n += 1.0;
      }
    }
  }
  CHECK(std::abs(imp_sum / imp_n - obs_sum / obs_n) < 0.03);
}

TEST_CASE("imputed binary covariates stay in range") {
  const Eigen::Index n = 300;
  Rng g(51, 0);
  Eigen::MatrixXd v(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    v(i, 0) = g.normal();
    v(i, 1) = g.bernoulli(1.0 / (1.0 + std::exp(-v(i, 0)))) ? 1.0 : 0.0;
  }
  std::vector<ColumnSpec> schema = {{"x", ColumnRole::Continuous, 0},
                                    {"b", ColumnRole::Binary, 0}};
  Table full = Table::fully_observed(schema, v);
  Table masked = apply_missingness(full, {MissingnessMechanism::mcar("b", 0.6)}, Rng(52, 0));
  ChainConfig cfg;
  cfg.imputations = 5;
  auto tables = chained_impute(masked, {{"b", {"x"}, ImputerFamily::BayesLogistic}}, cfg,
                               Rng(53, 0), {});
  for (const auto& t : tables)
    for (Eigen::Index i = 0; i < t.n_rows(); ++i) {
      double b = t.value(i, t.column_index("b"));
      CHECK((b == 0.0 || b == 1.0));
    }
}

TEST_CASE("imputed categorical covariates cover the observed codes") {
  const Eigen::Index n = 600;
  Rng g(61, 0);
  Eigen::MatrixXd v(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    v(i, 0) = g.normal();
    double u = g.uniform();
    v(i, 1) = u < 0.3 ? 0.0 : (u < 0.7 ? 1.0 : 2.0);
  }
  std::vector<ColumnSpec> schema = {{"x", ColumnRole::Continuous, 0},
                                    {"c", ColumnRole::Categorical, 3}};
  Table full = Table::fully_observed(schema, v);
  Table masked = apply_missingness(full, {MissingnessMechanism::mcar("c", 0.5)}, Rng(62, 0));
  ChainConfig cfg;
  cfg.imputations = 4;
  auto tables = chained_impute(masked, {{"c", {"x"}, ImputerFamily::BayesMultinomial}}, cfg,
                               Rng(63, 0), {});
  std::vector<int> seen(3, 0);
  for (const auto& t : tables)
    for (Eigen::Index i = 0; i < n; ++i) {
      double c = t.value(i, 1);
      REQUIRE(c >= 0.0);
      REQUIRE(c <= 2.0);
      if (!masked.observed(i, 1)) ++seen[size_t(c)];
    }
  CHECK(seen[0] > 0);
  CHECK(seen[1] > 0);
  CHECK(seen[2] > 0);
}

TEST_CASE("structural guards: outcome exclusion and spec coverage") {
  Table masked = masked_scenario1(100, 71);
  ChainConfig cfg;
  cfg.imputations = 2;

  std::vector<ImputerSpec> with_y = {{"x2", {"x1", "y"}, ImputerFamily::BayesLinear}};
  CHECK_THROWS_MSG(chained_impute(masked, with_y, cfg, Rng(0, 0), {"y"}), InputError,
                   "outcome column");
  // allowed when the exclusion list does not name y
  CHECK_NOTHROW(chained_impute(masked, with_y, cfg, Rng(0, 0), {}));

  std::vector<ImputerSpec> self = {{"x2", {"x2"}, ImputerFamily::BayesLinear}};
  CHECK_THROWS_AS(chained_impute(masked, self, cfg, Rng(0, 0), {"y"}), InputError);

  CHECK_THROWS_MSG(chained_impute(masked, {}, cfg, Rng(0, 0), {"y"}), InputError, "no imputer");

  std::vector<ImputerSpec> wrong_family = {{"x2", {"x1"}, ImputerFamily::BayesLogistic}};
  CHECK_THROWS_AS(chained_impute(masked, wrong_family, cfg, Rng(0, 0), {"y"}), InputError);
}

TEST_CASE("extra sweeps leave the imputed distribution unchanged for one incomplete column") {
  Table masked = masked_scenario1(20000, 81);
  Eigen::Index x2 = masked.column_index("x2");
  auto pool = [&](int cycles, uint64_t seed) {
    ChainConfig cfg;
    cfg.imputations = 2;
    cfg.cycles = cycles;
    auto tables = chained_impute(masked, scenario_imputers(1, false), cfg, Rng(seed, 0), {"y"});
    std::vector<double> values;
    for (const auto& t : tables)
      for (Eigen::Index i = 0; i < t.n_rows(); ++i)
        if (!masked.observed(i, x2)) values.push_back(t.value(i, x2));
    return values;
  };
  std::vector<double> few = pool(1, 91);
  std::vector<double> many = pool(6, 92);
  REQUIRE(few.size() > 10000);
  CHECK(ks_statistic(few, many) < 0.05);
}

TEST_CASE("outcome imputation fills only missing responses") {
  const Eigen::Index n = 10000;
  Rng g(101, 0);
  Eigen::MatrixXd v(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    v(i, 0) = g.normal();
    v(i, 1) = 0.0;  // placeholder, masked below
  }
  BoolGrid mask = BoolGrid::Constant(n, 2, true);
  for (Eigen::Index i = 0; i < n; ++i) mask(i, 1) = i % 2 == 0;
  std::vector<ColumnSpec> schema = {{"x", ColumnRole::Continuous, 0},
                                    {"y", ColumnRole::Continuous, 0}};
  Table t(schema, v, mask);

  OutcomeSpec outcome;
  outcome.family = Family::Gaussian;
  outcome.response = "y";
  outcome.terms = {"x"};

  OutcomeDraw draw;
  draw.theta = Eigen::VectorXd::Zero(2);  // intercept and slope zero
  draw.sigma2 = 1.0;
  Table filled = impute_outcome(t, outcome, draw, Rng(102, 0));
  CHECK(filled.mask().all());
  double sum = 0.0, count = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (mask(i, 1)) {
      CHECK(filled.value(i, 1) == t.value(i, 1));
    } else {
      sum += filled.value(i, 1);
      count += 1.0;
    }
  }
  // standard-normal draws
  CHECK(std::abs(sum / count) < 0.05);

  // no missing response: output equals input
  Table complete = Table::fully_observed(schema, v);
  Table same = impute_outcome(complete, outcome, draw, Rng(103, 0));
  CHECK(same.values() == complete.values());

  // saturation for a huge linear predictor under the logit family
  OutcomeSpec logit;
  logit.family = Family::Bernoulli;
  logit.response = "y";
  logit.terms = {"x"};
  Eigen::MatrixXd vb = v;
  for (Eigen::Index i = 0; i < n; ++i) vb(i, 1) = 0.0;
  Table tb(schema, vb, mask);
  OutcomeDraw bdraw;
  bdraw.theta.resize(2);
  bdraw.theta << 50.0, 0.0;
  Table bf = impute_outcome(tb, logit, bdraw, Rng(104, 0));
  for (Eigen::Index i = 0; i < n; ++i)
    if (!mask(i, 1)) CHECK(bf.value(i, 1) == 1.0);

  OutcomeSpec cox;
  cox.family = Family::Cox;
  CHECK_THROWS_AS(impute_outcome(t, cox, draw, Rng(0, 0)), InputError);
}

TEST_CASE("multinomial selection follows the density weights") {
  const Eigen::Index n = 10000;
  std::vector<ColumnSpec> schema = {{"x", ColumnRole::Continuous, 0}};
  Eigen::MatrixXd v1 = Eigen::MatrixXd::Constant(n, 1, 1.0);
  Eigen::MatrixXd v2 = Eigen::MatrixXd::Constant(n, 1, 2.0);
  std::vector<Table> candidates = {Table::fully_observed(schema, v1),
                                   Table::fully_observed(schema, v2)};

  Eigen::MatrixXd logf(n, 2);
  logf.col(0).setConstant(std::log(0.2));
  logf.col(1).setConstant(std::log(0.6));
  Table picked = multinomial_select(candidates, logf, Rng(111, 0));
  double frac2 = (picked.values().array() == 2.0).cast<double>().mean();
  CHECK(std::abs(frac2 - 0.75) < 0.02);

  // degenerate density selects the only positive candidate
  logf.col(0).setConstant(-std::numeric_limits<double>::infinity());
  Table only = multinomial_select(candidates, logf, Rng(112, 0));
  CHECK((only.values().array() == 2.0).all());

  // equal densities select uniformly
  logf.setConstant(0.0);
  Table unif = multinomial_select(candidates, logf, Rng(113, 0));
  double frac = (unif.values().array() == 2.0).cast<double>().mean();
  CHECK(std::abs(frac - 0.5) < 0.02);

  Eigen::MatrixXd all_zero =
      Eigen::MatrixXd::Constant(n, 2, -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(multinomial_select(candidates, all_zero, Rng(114, 0)), NumericError);
}
