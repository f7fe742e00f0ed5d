#include "stackmi/outcome_models.hpp"

#include <cmath>

#include "model_detail.hpp"
#include "stackmi/errors.hpp"

namespace stackmi {

using detail::CompensatedSum;
using detail::log1pexp;
using detail::packed_index;
using detail::packed_size;

namespace detail {

void pack_symmetric(const Eigen::MatrixXd& m, PackedRowRef out) {
  const Eigen::Index q = m.rows();
  for (Eigen::Index i = 0; i < q; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) out[packed_index(i, j)] = m(i, j);
}

void validate_weights(const Eigen::VectorXd& w, Eigen::Index rows) {
  if (w.size() != rows) throw InputError("weight vector length does not match data rows");
  bool any_positive = false;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (!std::isfinite(w[i]) || w[i] < 0.0)
      throw InputError("weights must be finite and nonnegative");
    if (w[i] > 0.0) any_positive = true;
  }
  if (!any_positive) throw InputError("weights are all zero");
}

void require_full_rank(const Eigen::MatrixXd& X, const Eigen::VectorXd& w) {
  Eigen::MatrixXd Xw = w.array().sqrt().matrix().asDiagonal() * X;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xw);
  qr.setThreshold(1e-10);
  if (qr.rank() < X.cols())
    throw NumericError("singular design: rank " + std::to_string(qr.rank()) + " < " +
                       std::to_string(X.cols()) + " on weighted support");
}

FitResult fit_gaussian(const Design& d, const Eigen::VectorXd& w, const FitOptions&) {
  const Eigen::Index n = d.n_rows(), q = d.n_coefs();
  require_full_rank(d.X, w);

  Eigen::VectorXd sw = w.array().sqrt();
  Eigen::MatrixXd Xw = sw.asDiagonal() * d.X;
  Eigen::VectorXd yw = sw.asDiagonal() * d.y;
  Eigen::VectorXd theta = Xw.colPivHouseholderQr().solve(yw);

  Eigen::VectorXd resid = d.y - d.X * theta;
  double wsum = w.sum();
  double sigma2 = (w.array() * resid.array().square()).sum() / wsum;
  if (!(sigma2 > 0.0))
    throw NumericError("zero residual variance in gaussian fit");

  FitResult fit;
  fit.family = Family::Gaussian;
  fit.theta = theta;
  fit.sigma2 = sigma2;
  fit.coef_names = d.coef_names;
  fit.converged = true;
  fit.iterations = 1;
  fit.loglik = -0.5 * wsum * std::log(2.0 * M_PI * sigma2) -
               (w.array() * resid.array().square()).sum() / (2.0 * sigma2);

  fit.row_scores.resize(n, q);
  fit.row_info_packed.resize(n, packed_size(q));
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(q, q);
  for (Eigen::Index r = 0; r < n; ++r) {
    Eigen::VectorXd x = d.X.row(r);
    fit.row_scores.row(r) = (x * (resid[r] / sigma2)).transpose();
    Eigen::MatrixXd jr = x * x.transpose() / sigma2;
    detail::pack_symmetric(jr, fit.row_info_packed.row(r));
    info += w[r] * jr;
  }
  fit.weighted_information = info;
  return fit;
}

namespace {

// compensated scalar sum: on large stacks the final Newton step improves the
// log-likelihood by less than naive summation noise
double bernoulli_loglik(const Design& d, const Eigen::VectorXd& w, const Eigen::VectorXd& theta) {
  Eigen::VectorXd eta = d.X * theta;
  double sum = 0.0, comp = 0.0;
  for (Eigen::Index r = 0; r < d.n_rows(); ++r) {
    double term = w[r] * (d.y[r] * eta[r] - log1pexp(eta[r]));
    double y = term - comp;
    double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  return sum;
}

}  // namespace

FitResult fit_bernoulli(const Design& d, const Eigen::VectorXd& w, const FitOptions& opt) {
  const Eigen::Index n = d.n_rows(), q = d.n_coefs();
  require_full_rank(d.X, w);
  for (Eigen::Index r = 0; r < n; ++r)
    if (d.y[r] != 0.0 && d.y[r] != 1.0)
      throw InputError("bernoulli response must be 0/1");

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(q);
  double ll = bernoulli_loglik(d, w, theta);
  double last_rel_change = std::numeric_limits<double>::infinity();
  Eigen::VectorXd score(q);
  Eigen::MatrixXd info(q, q);
  int iter = 0;
  bool converged = false;

  while (iter < opt.max_iterations) {
    Eigen::VectorXd eta = d.X * theta;
    CompensatedSum score_sum(q);
    info.setZero();
    for (Eigen::Index r = 0; r < n; ++r) {
      double p = 1.0 / (1.0 + std::exp(-eta[r]));
      score_sum.add(w[r] * (d.y[r] - p) * d.X.row(r).transpose());
      info.noalias() += w[r] * p * (1.0 - p) * d.X.row(r).transpose() * d.X.row(r);
    }
    score = score_sum.value();
    if (score.lpNorm<Eigen::Infinity>() < opt.score_tol &&
        (iter == 0 || last_rel_change < opt.loglik_tol)) {
      converged = true;
      break;
    }
    ++iter;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success)
      throw NumericError("singular information matrix in bernoulli fit");
    Eigen::VectorXd step = ldlt.solve(score);

    double new_ll = ll;
    Eigen::VectorXd candidate = theta;
    double scale = 1.0;
    const double slack = 1e-11 * (1.0 + std::abs(ll));  // rounding-level tolerance
    for (int h = 0; h <= 20; ++h) {
      candidate = theta + scale * step;
      new_ll = bernoulli_loglik(d, w, candidate);
      if (new_ll >= ll - slack || h == 20) break;
      scale *= 0.5;
    }
    last_rel_change = std::abs(new_ll - ll) / (1.0 + std::abs(new_ll));
    theta = candidate;
    ll = new_ll;
    if (theta.lpNorm<Eigen::Infinity>() > opt.coef_bound)
      throw NumericError("bernoulli fit diverged: coefficient bound exceeded "
                         "(possible separation)");
  }
  if (!converged)
    throw NumericError("bernoulli fit did not converge in " +
                       std::to_string(opt.max_iterations) + " iterations");

  FitResult fit;
  fit.family = Family::Bernoulli;
  fit.theta = theta;
  fit.coef_names = d.coef_names;
  fit.converged = true;
  fit.iterations = iter;
  fit.loglik = bernoulli_loglik(d, w, theta);

  fit.row_scores.resize(n, q);
  fit.row_info_packed.resize(n, packed_size(q));
  Eigen::MatrixXd total_info = Eigen::MatrixXd::Zero(q, q);
  Eigen::VectorXd eta = d.X * theta;
  for (Eigen::Index r = 0; r < n; ++r) {
    double p = 1.0 / (1.0 + std::exp(-eta[r]));
    Eigen::VectorXd x = d.X.row(r);
    fit.row_scores.row(r) = ((d.y[r] - p) * x).transpose();
    Eigen::MatrixXd jr = p * (1.0 - p) * x * x.transpose();
    detail::pack_symmetric(jr, fit.row_info_packed.row(r));
    total_info += w[r] * jr;
  }
  fit.weighted_information = total_info;
  return fit;
}

}  // namespace detail

Eigen::MatrixXd FitResult::row_information(Eigen::Index r) const {
  const Eigen::Index q = theta.size();
  Eigen::MatrixXd m(q, q);
  for (Eigen::Index i = 0; i < q; ++i)
    for (Eigen::Index j = 0; j <= i; ++j)
      m(i, j) = m(j, i) = row_info_packed(r, packed_index(i, j));
  return m;
}

Eigen::MatrixXd FitResult::model_covariance() const {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(weighted_information);
  if (ldlt.info() != Eigen::Success)
    throw NumericError("information matrix is singular");
  return ldlt.solve(Eigen::MatrixXd::Identity(theta.size(), theta.size()));
}

FitResult fit_weighted(const Design& design, const Eigen::VectorXd& weights,
                       const FitOptions& options) {
  detail::validate_weights(weights, design.n_rows());
  switch (design.family) {
    case Family::Gaussian: return detail::fit_gaussian(design, weights, options);
    case Family::Bernoulli: return detail::fit_bernoulli(design, weights, options);
    case Family::Cox: return detail::fit_cox(design, weights, options);
  }
  throw Error("unreachable");
}

FitResult fit_unweighted(const Design& design, const FitOptions& options) {
  return fit_weighted(design, Eigen::VectorXd::Ones(design.n_rows()), options);
}

double weighted_loglik(const Design& d, const Eigen::VectorXd& w, const Eigen::VectorXd& theta,
                       double sigma2) {
  switch (d.family) {
    case Family::Gaussian: {
      Eigen::VectorXd resid = d.y - d.X * theta;
      return -0.5 * w.sum() * std::log(2.0 * M_PI * sigma2) -
             (w.array() * resid.array().square()).sum() / (2.0 * sigma2);
    }
    case Family::Bernoulli: {
      Eigen::VectorXd eta = d.X * theta;
      double ll = 0.0;
      for (Eigen::Index r = 0; r < d.n_rows(); ++r)
        ll += w[r] * (d.y[r] * eta[r] - log1pexp(eta[r]));
      return ll;
    }
    case Family::Cox: return detail::cox_loglik(d, w, theta);
  }
  throw Error("unreachable");
}

void score_information(const Design& d, const Eigen::VectorXd& w, const Eigen::VectorXd& theta,
                       double sigma2, Eigen::VectorXd* score, Eigen::MatrixXd* information) {
  const Eigen::Index q = d.n_coefs();
  switch (d.family) {
    case Family::Gaussian: {
      Eigen::VectorXd resid = d.y - d.X * theta;
      if (score) *score = d.X.transpose() * (w.array() * resid.array() / sigma2).matrix();
      if (information)
        *information = d.X.transpose() * w.asDiagonal() * d.X / sigma2;
      return;
    }
    case Family::Bernoulli: {
      Eigen::VectorXd eta = d.X * theta;
      if (score) score->setZero(q);
      if (information) information->setZero(q, q);
      for (Eigen::Index r = 0; r < d.n_rows(); ++r) {
        double p = 1.0 / (1.0 + std::exp(-eta[r]));
        if (score) score->noalias() += w[r] * (d.y[r] - p) * d.X.row(r).transpose();
        if (information)
          information->noalias() +=
              w[r] * p * (1.0 - p) * d.X.row(r).transpose() * d.X.row(r);
      }
      return;
    }
    case Family::Cox:
      detail::cox_score_information(d, w, theta, score, information);
      return;
  }
}

double log_density_row(const Design& d, Eigen::Index row, const Eigen::VectorXd& theta,
                       double sigma2, const BaselineHazard* baseline) {
  double eta = d.X.row(row).dot(theta);
  switch (d.family) {
    case Family::Gaussian: {
      if (!(sigma2 > 0.0)) throw InputError("gaussian density needs sigma2 > 0");
      double r = d.y[row] - eta;
      return -0.5 * std::log(2.0 * M_PI * sigma2) - r * r / (2.0 * sigma2);
    }
    case Family::Bernoulli:
      return d.y[row] == 1.0 ? -log1pexp(-eta) : -log1pexp(eta);
    case Family::Cox: {
      if (!baseline) throw InputError("cox density needs a baseline hazard");
      double t = d.time[row];
      double delta = d.event[row];
      double log_f = -baseline->cumhaz_at(t) * std::exp(eta);
      if (delta == 1.0) log_f += std::log(baseline->rate_at(t)) + eta;
      return log_f;
    }
  }
  throw Error("unreachable");
}

double density_row(const Design& d, Eigen::Index row, const Eigen::VectorXd& theta, double sigma2,
                   const BaselineHazard* baseline) {
  return std::exp(log_density_row(d, row, theta, sigma2, baseline));
}

FiniteDiffReport finite_diff_check(const Design& d, const Eigen::VectorXd& w,
                                   const Eigen::VectorXd& theta, double sigma2, double step) {
  const Eigen::Index q = theta.size();
  FiniteDiffReport report;

  Eigen::VectorXd score(q);
  Eigen::MatrixXd info(q, q);
  score_information(d, w, theta, sigma2, &score, &info);

  for (Eigen::Index j = 0; j < q; ++j) {
    double h = step * (1.0 + std::abs(theta[j]));
    Eigen::VectorXd up = theta, dn = theta;
    up[j] += h;
    dn[j] -= h;
    double g = (weighted_loglik(d, w, up, sigma2) - weighted_loglik(d, w, dn, sigma2)) / (2 * h);
    double disc = std::abs(score[j] - g) / (1.0 + std::abs(g));
    report.score_discrepancy = std::max(report.score_discrepancy, disc);

    Eigen::VectorXd su(q), sd(q);
    score_information(d, w, up, sigma2, &su, nullptr);
    score_information(d, w, dn, sigma2, &sd, nullptr);
    for (Eigen::Index k = 0; k < q; ++k) {
      double hess_jk = (su[k] - sd[k]) / (2 * h);  // d2 ll / dtheta_j dtheta_k
      double disc2 = std::abs(info(j, k) - (-hess_jk)) / (1.0 + std::abs(hess_jk));
      report.information_discrepancy = std::max(report.information_discrepancy, disc2);
    }
  }
  return report;
}

}  // namespace stackmi
