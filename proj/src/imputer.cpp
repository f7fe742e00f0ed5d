#include "stackmi/imputer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stackmi/errors.hpp"

namespace stackmi {

namespace {

inline double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<Eigen::Index> named_columns(const Table& t, const std::vector<std::string>& names) {
  std::vector<Eigen::Index> out;
  out.reserve(names.size());
  for (const auto& n : names) out.push_back(t.column_index(n));
  return out;
}

// Least-squares fit plus exact posterior draw under the reference prior:
// sigma2 ~ RSS / chisq(n - q), beta | sigma2 ~ N(beta_hat, sigma2 (Z'Z)^-1).
ImputerDraw draw_linear(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y, Rng& rng) {
  const Eigen::Index n = Z.rows(), q = Z.cols();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
  qr.setThreshold(1e-10);
  if (qr.rank() < q) throw NumericError("singular design in linear imputation model");
  Eigen::VectorXd beta_hat = qr.solve(y);
  double rss = (y - Z * beta_hat).squaredNorm();
  double scale = y.squaredNorm() + 1.0;
  if (rss <= 1e-12 * scale)
    throw NumericError("singular design: no residual variation in linear imputation model");

  double df = double(n - q);
  double sigma2 = rss / rng.chi_square(df);

  Eigen::MatrixXd ztz = Z.transpose() * Z;
  Eigen::LLT<Eigen::MatrixXd> llt(ztz);
  if (llt.info() != Eigen::Success)
    throw NumericError("singular design in linear imputation model");
  Eigen::VectorXd z(q);
  for (Eigen::Index j = 0; j < q; ++j) z[j] = rng.normal();
  // beta = beta_hat + sqrt(sigma2) * R^{-1} z with R'R = Z'Z
  Eigen::VectorXd pert = llt.matrixU().solve(z);

  ImputerDraw draw;
  draw.family = ImputerFamily::BayesLinear;
  draw.coef = beta_hat + std::sqrt(sigma2) * pert;
  draw.sigma2 = sigma2;
  return draw;
}

Eigen::VectorXd newton_logistic(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y,
                                Eigen::MatrixXd* information) {
  const Eigen::Index q = Z.cols();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(q);
  double ll = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 100; ++iter) {
    Eigen::VectorXd eta = Z * beta;
    Eigen::VectorXd score = Eigen::VectorXd::Zero(q);
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(q, q);
    double new_ll = 0.0;
    for (Eigen::Index r = 0; r < Z.rows(); ++r) {
      double p = expit(eta[r]);
      new_ll += y[r] * eta[r] - (eta[r] > 0 ? eta[r] + std::log1p(std::exp(-eta[r]))
                                            : std::log1p(std::exp(eta[r])));
      score.noalias() += (y[r] - p) * Z.row(r).transpose();
      info.noalias() += p * (1.0 - p) * Z.row(r).transpose() * Z.row(r);
    }
    if (score.lpNorm<Eigen::Infinity>() < 1e-8 && iter > 0) {
      if (information) *information = info;
      return beta;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success)
      throw NumericError("singular design in logistic imputation model");
    Eigen::VectorXd step = ldlt.solve(score);
    double scale = 1.0;
    Eigen::VectorXd cand;
    for (int h = 0; h <= 20; ++h) {
      cand = beta + scale * step;
      double cll = 0.0;
      Eigen::VectorXd ce = Z * cand;
      for (Eigen::Index r = 0; r < Z.rows(); ++r)
        cll += y[r] * ce[r] -
               (ce[r] > 0 ? ce[r] + std::log1p(std::exp(-ce[r])) : std::log1p(std::exp(ce[r])));
      if (cll >= ll || h == 20) {
        new_ll = cll;
        break;
      }
      scale *= 0.5;
    }
    beta = cand;
    ll = new_ll;
    if (beta.lpNorm<Eigen::Infinity>() > 1e3)
      throw NumericError("logistic imputation model diverged (possible separation)");
  }
  throw NumericError("logistic imputation model did not converge");
}

ImputerDraw draw_logistic(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y, Rng& rng) {
  Eigen::MatrixXd info;
  Eigen::VectorXd beta_hat = newton_logistic(Z, y, &info);
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() != Eigen::Success)
    throw NumericError("singular information in logistic imputation model");
  Eigen::VectorXd z(beta_hat.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = rng.normal();
  ImputerDraw draw;
  draw.family = ImputerFamily::BayesLogistic;
  draw.coef = beta_hat + llt.matrixU().solve(z);  // cov = info^{-1}
  return draw;
}

// Multinomial logistic with level 0 as reference; coefficients are stacked as
// a q x (k-1) matrix and the joint Newton step runs on the vectorized block.
ImputerDraw draw_multinomial(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y, int levels,
                             Rng& rng) {
  const Eigen::Index q = Z.cols(), n = Z.rows();
  const int km1 = levels - 1;
  const Eigen::Index dim = q * km1;
  Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(q, km1);

  auto loglik = [&](const Eigen::MatrixXd& b) {
    double ll = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) {
      Eigen::VectorXd eta = b.transpose() * Z.row(r).transpose();
      double mx = std::max(0.0, eta.maxCoeff());
      double denom = std::exp(-mx);
      for (int c = 0; c < km1; ++c) denom += std::exp(eta[c] - mx);
      int cls = int(y[r]);
      ll += (cls > 0 ? eta[cls - 1] : 0.0) - mx - std::log(denom);
    }
    return ll;
  };

  double ll = loglik(beta);
  Eigen::MatrixXd info(dim, dim);
  for (int iter = 0; iter < 200; ++iter) {
    Eigen::VectorXd score = Eigen::VectorXd::Zero(dim);
    info.setZero();
    for (Eigen::Index r = 0; r < n; ++r) {
      Eigen::VectorXd eta = beta.transpose() * Z.row(r).transpose();
      double mx = std::max(0.0, eta.maxCoeff());
      double denom = std::exp(-mx);
      Eigen::VectorXd ex(km1);
      for (int c = 0; c < km1; ++c) {
        ex[c] = std::exp(eta[c] - mx);
        denom += ex[c];
      }
      Eigen::VectorXd p = ex / denom;
      int cls = int(y[r]);
      for (int c = 0; c < km1; ++c) {
        double resid = (cls == c + 1 ? 1.0 : 0.0) - p[c];
        score.segment(c * q, q) += resid * Z.row(r).transpose();
        for (int c2 = 0; c2 < km1; ++c2) {
          double wcc = (c == c2 ? p[c] * (1.0 - p[c]) : -p[c] * p[c2]);
          info.block(c * q, c2 * q, q, q) += wcc * Z.row(r).transpose() * Z.row(r);
        }
      }
    }
    if (score.lpNorm<Eigen::Infinity>() < 1e-8 && iter > 0) break;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success)
      throw NumericError("singular design in multinomial imputation model");
    Eigen::VectorXd step = ldlt.solve(score);
    double scale = 1.0;
    Eigen::MatrixXd cand = beta;
    for (int h = 0; h <= 20; ++h) {
      for (int c = 0; c < km1; ++c) cand.col(c) = beta.col(c) + scale * step.segment(c * q, q);
      double cll = loglik(cand);
      if (cll >= ll || h == 20) {
        ll = cll;
        break;
      }
      scale *= 0.5;
    }
    beta = cand;
    if (beta.lpNorm<Eigen::Infinity>() > 1e3)
      throw NumericError("multinomial imputation model diverged (possible separation)");
    if (iter == 199) throw NumericError("multinomial imputation model did not converge");
  }

  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() != Eigen::Success)
    throw NumericError("singular information in multinomial imputation model");
  Eigen::VectorXd z(dim);
  for (Eigen::Index j = 0; j < dim; ++j) z[j] = rng.normal();
  Eigen::VectorXd pert = llt.matrixU().solve(z);

  ImputerDraw draw;
  draw.family = ImputerFamily::BayesMultinomial;
  draw.levels = levels;
  draw.coef.resize(q, km1);
  for (int c = 0; c < km1; ++c) draw.coef.col(c) = beta.col(c) + pert.segment(c * q, q);
  return draw;
}

void check_family_role(const ImputerSpec& spec, const ColumnSpec& col) {
  bool ok = false;
  switch (spec.family) {
    case ImputerFamily::BayesLinear: ok = col.role == ColumnRole::Continuous; break;
    case ImputerFamily::BayesLogistic: ok = col.role == ColumnRole::Binary; break;
    case ImputerFamily::BayesMultinomial: ok = col.role == ColumnRole::Categorical; break;
  }
  if (!ok)
    throw InputError("imputer family " + imputer_family_name(spec.family) +
                     " is incompatible with role " + role_name(col.role) + " of column '" +
                     col.name + "'");
}

ImputerDraw fit_and_draw(const std::vector<ColumnSpec>& schema, const Eigen::MatrixXd& values,
                         const std::vector<Eigen::Index>& rows, Eigen::Index target_col,
                         const std::vector<Eigen::Index>& predictor_cols, ImputerFamily family,
                         int levels, Rng& rng) {
  Eigen::MatrixXd Z = predictor_matrix(schema, values, rows, predictor_cols);
  if (Eigen::Index(rows.size()) < Z.cols() + 2)
    throw NumericError("insufficient complete rows to fit imputation model for column '" +
                       schema[size_t(target_col)].name + "'");
  Eigen::VectorXd y(Eigen::Index(rows.size()));
  for (Eigen::Index r = 0; r < y.size(); ++r) y[r] = values(rows[size_t(r)], target_col);
  switch (family) {
    case ImputerFamily::BayesLinear: return draw_linear(Z, y, rng);
    case ImputerFamily::BayesLogistic: return draw_logistic(Z, y, rng);
    case ImputerFamily::BayesMultinomial: return draw_multinomial(Z, y, levels, rng);
  }
  throw Error("unreachable");
}

double predictive_draw(const ImputerDraw& draw, const Eigen::RowVectorXd& z, Rng& rng) {
  switch (draw.family) {
    case ImputerFamily::BayesLinear:
      return z.dot(draw.coef.col(0)) + std::sqrt(draw.sigma2) * rng.normal();
    case ImputerFamily::BayesLogistic:
      return rng.bernoulli(expit(z.dot(draw.coef.col(0)))) ? 1.0 : 0.0;
    case ImputerFamily::BayesMultinomial: {
      Eigen::VectorXd eta = draw.coef.transpose() * z.transpose();
      double mx = std::max(0.0, eta.maxCoeff());
      std::vector<double> w;
      w.reserve(size_t(draw.levels));
      w.push_back(std::exp(-mx));
      for (int c = 1; c < draw.levels; ++c) w.push_back(std::exp(eta[c - 1] - mx));
      return double(rng.categorical(w));
    }
  }
  throw Error("unreachable");
}

}  // namespace

ImputerFamily default_imputer_family(ColumnRole role) {
  switch (role) {
    case ColumnRole::Continuous: return ImputerFamily::BayesLinear;
    case ColumnRole::Binary: return ImputerFamily::BayesLogistic;
    case ColumnRole::Categorical: return ImputerFamily::BayesMultinomial;
    default:
      throw InputError("no default imputer family for role " + role_name(role));
  }
}

std::string imputer_family_name(ImputerFamily f) {
  switch (f) {
    case ImputerFamily::BayesLinear: return "bayes-linear";
    case ImputerFamily::BayesLogistic: return "bayes-logistic";
    case ImputerFamily::BayesMultinomial: return "bayes-multinomial";
  }
  return "?";
}

ImputerFamily parse_imputer_family(const std::string& text) {
  if (text == "bayes-linear") return ImputerFamily::BayesLinear;
  if (text == "bayes-logistic") return ImputerFamily::BayesLogistic;
  if (text == "bayes-multinomial") return ImputerFamily::BayesMultinomial;
  throw InputError("unknown imputer family '" + text + "'");
}

ImputerDraw draw_imputer(const Table& table, const ImputerSpec& spec, Rng rng) {
  Eigen::Index target = table.column_index(spec.target);
  std::vector<Eigen::Index> preds = named_columns(table, spec.predictors);
  for (Eigen::Index p : preds)
    if (p == target) throw InputError("imputer for '" + spec.target + "' predicts from itself");
  check_family_role(spec, table.column(target));

  std::vector<Eigen::Index> all = preds;
  all.push_back(target);
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < table.n_rows(); ++i)
    if (table.row_complete(i, all)) rows.push_back(i);
  return fit_and_draw(table.columns(), table.values(), rows, target, preds, spec.family,
                      table.column(target).levels, rng);
}

std::vector<Table> chained_impute(const Table& table, const std::vector<ImputerSpec>& specs,
                                  const ChainConfig& config, Rng rng,
                                  const std::vector<std::string>& outcome_columns) {
  if (config.imputations < 2) throw InputError("chained imputation needs M >= 2");
  if (config.cycles < 1) throw InputError("chained imputation needs cycles >= 1");

  auto is_outcome = [&outcome_columns](const std::string& name) {
    return std::find(outcome_columns.begin(), outcome_columns.end(), name) !=
           outcome_columns.end();
  };

  // Structural checks: one spec per incomplete non-outcome column, no outcome
  // columns anywhere in the specs.
  std::vector<Eigen::Index> targets;
  for (const auto& spec : specs) {
    Eigen::Index t = table.column_index(spec.target);
    if (is_outcome(spec.target))
      throw InputError("imputer target '" + spec.target + "' is an outcome column");
    for (const auto& p : spec.predictors) {
      if (p == spec.target)
        throw InputError("imputer for '" + spec.target + "' predicts from itself");
      if (is_outcome(p))
        throw InputError("imputer for '" + spec.target + "' uses outcome column '" + p + "'");
      table.column_index(p);
    }
    if (std::find(targets.begin(), targets.end(), t) != targets.end())
      throw InputError("duplicate imputer for column '" + spec.target + "'");
    check_family_role(spec, table.column(t));
    targets.push_back(t);
  }
  for (Eigen::Index j = 0; j < table.n_cols(); ++j) {
    if (table.column_complete(j) || is_outcome(table.column(j).name)) continue;
    if (std::find(targets.begin(), targets.end(), j) == targets.end())
      throw InputError("incomplete column '" + table.column(j).name + "' has no imputer");
  }

  // Visit order: explicit, or ascending count of missing cells.
  std::vector<size_t> order(specs.size());
  std::iota(order.begin(), order.end(), size_t(0));
  if (!config.visit_order.empty()) {
    if (config.visit_order.size() != specs.size())
      throw InputError("visit order must list every imputed column exactly once");
    for (size_t k = 0; k < config.visit_order.size(); ++k) {
      auto it = std::find_if(specs.begin(), specs.end(), [&](const ImputerSpec& s) {
        return s.target == config.visit_order[k];
      });
      if (it == specs.end())
        throw InputError("visit order names '" + config.visit_order[k] + "' which has no imputer");
      order[k] = size_t(it - specs.begin());
    }
  } else {
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return table.missing_count(targets[a]) < table.missing_count(targets[b]);
    });
  }

  // Rows needing imputation and rows eligible for each model refit.
  std::vector<std::vector<Eigen::Index>> missing_rows(specs.size()), observed_rows(specs.size());
  for (size_t s = 0; s < specs.size(); ++s)
    for (Eigen::Index i = 0; i < table.n_rows(); ++i)
      (table.observed(i, targets[s]) ? observed_rows[s] : missing_rows[s]).push_back(i);

  std::vector<std::vector<Eigen::Index>> pred_cols(specs.size());
  for (size_t s = 0; s < specs.size(); ++s) pred_cols[s] = named_columns(table, specs[s].predictors);

  std::vector<Table> out;
  out.reserve(size_t(config.imputations));
  for (int m = 0; m < config.imputations; ++m) {
    Rng chain_rng = rng.split(uint64_t(m));
    Eigen::MatrixXd values = table.values();
    BoolGrid mask = table.mask();

    // initialize from the observed marginals
    for (size_t s = 0; s < specs.size(); ++s) {
      if (missing_rows[s].empty()) continue;
      std::vector<double> pool = table.observed_values(targets[s]);
      if (pool.empty())
        throw NumericError("column '" + specs[s].target + "' has no observed values");
      for (Eigen::Index i : missing_rows[s]) {
        size_t pick = size_t(chain_rng.uniform() * double(pool.size()));
        if (pick >= pool.size()) pick = pool.size() - 1;
        values(i, targets[s]) = pool[pick];
        mask(i, targets[s]) = true;
      }
    }

    for (int cycle = 0; cycle < config.cycles; ++cycle) {
      for (size_t k = 0; k < order.size(); ++k) {
        size_t s = order[k];
        if (missing_rows[s].empty()) continue;
        ImputerDraw draw =
            fit_and_draw(table.columns(), values, observed_rows[s], targets[s], pred_cols[s],
                         specs[s].family, table.column(targets[s]).levels, chain_rng);
        Eigen::MatrixXd Z =
            predictor_matrix(table.columns(), values, missing_rows[s], pred_cols[s]);
        for (size_t r = 0; r < missing_rows[s].size(); ++r)
          values(missing_rows[s][r], targets[s]) = predictive_draw(draw, Z.row(Eigen::Index(r)),
                                                                   chain_rng);
      }
    }
    out.emplace_back(table.columns(), std::move(values), std::move(mask));
  }
  return out;
}

Table impute_outcome(const Table& completed, const OutcomeSpec& outcome, const OutcomeDraw& draw,
                     Rng rng) {
  if (outcome.family == Family::Cox)
    throw InputError("outcome imputation is not supported for cox models");
  Eigen::Index ycol = completed.column_index(outcome.response);
  for (const auto& name : outcome.terms)
    if (!completed.column_complete(completed.column_index(name)))
      throw InputError("outcome imputation requires complete covariates ('" + name + "')");

  Eigen::MatrixXd values = completed.values();
  BoolGrid mask = completed.mask();
  Design d = build_design(outcome, completed.columns(), values);
  for (Eigen::Index i = 0; i < completed.n_rows(); ++i) {
    if (mask(i, ycol)) continue;
    double eta = d.X.row(i).dot(draw.theta);
    if (outcome.family == Family::Gaussian) {
      values(i, ycol) = eta + std::sqrt(draw.sigma2) * rng.normal();
    } else {
      values(i, ycol) = rng.bernoulli(expit(eta)) ? 1.0 : 0.0;
    }
    mask(i, ycol) = true;
  }
  return Table(completed.columns(), std::move(values), std::move(mask));
}

OutcomeDraw draw_outcome_params(const Table& table, const OutcomeSpec& outcome, Rng rng) {
  if (outcome.family == Family::Cox)
    throw InputError("outcome imputation is not supported for cox models");
  Eigen::Index ycol = table.column_index(outcome.response);
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < table.n_rows(); ++i)
    if (table.observed(i, ycol)) rows.push_back(i);
  if (rows.empty()) throw InputError("outcome column has no observed values");

  Eigen::MatrixXd sub(Eigen::Index(rows.size()), table.n_cols());
  for (Eigen::Index r = 0; r < sub.rows(); ++r) sub.row(r) = table.values().row(rows[size_t(r)]);
  Design d = build_design(outcome, table.columns(), sub);
  FitResult fit = fit_unweighted(d);

  OutcomeDraw draw;
  Eigen::LLT<Eigen::MatrixXd> llt(fit.weighted_information);
  if (llt.info() != Eigen::Success) throw NumericError("singular information in outcome model");
  Eigen::VectorXd z(fit.theta.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = rng.normal();
  draw.theta = fit.theta + llt.matrixU().solve(z);
  if (outcome.family == Family::Gaussian) {
    double df = double(sub.rows()) - double(fit.theta.size());
    draw.sigma2 = fit.sigma2 * double(sub.rows()) / rng.chi_square(df);
  }
  return draw;
}

Table multinomial_select(const std::vector<Table>& candidates,
                         const Eigen::MatrixXd& log_densities, Rng rng) {
  if (candidates.empty()) throw InputError("multinomial selection needs candidates");
  const Eigen::Index n = candidates[0].n_rows();
  const Eigen::Index m = Eigen::Index(candidates.size());
  if (log_densities.rows() != n || log_densities.cols() != m)
    throw InputError("log density matrix must be n x M");

  Eigen::MatrixXd values(n, candidates[0].n_cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    double mx = log_densities.row(i).maxCoeff();
    if (!std::isfinite(mx))
      throw NumericError("all candidate densities are zero for subject " + std::to_string(i));
    std::vector<double> w(static_cast<size_t>(m), 0.0);
    for (Eigen::Index k = 0; k < m; ++k) w[size_t(k)] = std::exp(log_densities(i, k) - mx);
    size_t pick = rng.categorical(w);
    values.row(i) = candidates[pick].values().row(i);
  }
  return Table(candidates[0].columns(), std::move(values), candidates[0].mask());
}

}  // namespace stackmi
