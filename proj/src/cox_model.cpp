#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "model_detail.hpp"
#include "stackmi/errors.hpp"

// Weighted Cox partial likelihood with Breslow tie handling. Rows sharing an
// event time form one tie group; the risk set at time t contains every row
// with time >= t. All sweeps run over indices sorted by time so each Newton
// iteration is a single O(n q^2) pass.

namespace stackmi::detail {

namespace {

struct CoxOrder {
  std::vector<Eigen::Index> by_time;           // ascending
  std::vector<Eigen::Index> group_start;       // tie-group boundaries into by_time
};

CoxOrder sort_rows(const Design& d) {
  CoxOrder ord;
  ord.by_time.resize(size_t(d.n_rows()));
  std::iota(ord.by_time.begin(), ord.by_time.end(), Eigen::Index(0));
  std::stable_sort(ord.by_time.begin(), ord.by_time.end(),
                   [&d](Eigen::Index a, Eigen::Index b) { return d.time[a] < d.time[b]; });
  for (size_t k = 0; k < ord.by_time.size(); ++k) {
    if (k == 0 || d.time[ord.by_time[k]] != d.time[ord.by_time[k - 1]])
      ord.group_start.push_back(Eigen::Index(k));
  }
  ord.group_start.push_back(Eigen::Index(ord.by_time.size()));
  return ord;
}

// One descending sweep: log-likelihood and, when requested, score/information
// and the per-event-time aggregates needed for residuals.
struct SweepResult {
  double loglik = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd information;
  // per distinct event time (ascending): time, weighted events d_k, S0_k, xbar_k
  std::vector<double> event_time;
  std::vector<double> d_over_s0;
  std::vector<Eigen::VectorXd> xbar;
  std::vector<Eigen::MatrixXd> s2_over_s0;  // only when want_aggregates
};

SweepResult cox_sweep(const Design& d, const Eigen::VectorXd& w, const Eigen::VectorXd& theta,
                      const CoxOrder& ord, bool want_derivatives, bool want_aggregates) {
  const Eigen::Index q = d.n_coefs();
  SweepResult out;
  if (want_derivatives) {
    out.score = Eigen::VectorXd::Zero(q);
    out.information = Eigen::MatrixXd::Zero(q, q);
  }

  Eigen::VectorXd eta = d.X * theta;
  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(q);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(q, q);

  const auto& gs = ord.group_start;
  for (Eigen::Index g = Eigen::Index(gs.size()) - 2; g >= 0; --g) {
    // add the tie group to the risk set
    for (Eigen::Index k = gs[size_t(g)]; k < gs[size_t(g) + 1]; ++k) {
      Eigen::Index r = ord.by_time[size_t(k)];
      double we = w[r] * std::exp(eta[r]);
      if (we == 0.0) continue;
      s0 += we;
      s1.noalias() += we * d.X.row(r).transpose();
      if (want_derivatives || want_aggregates)
        s2.noalias() += we * d.X.row(r).transpose() * d.X.row(r);
    }
    // process events at this time
    double dk = 0.0;
    for (Eigen::Index k = gs[size_t(g)]; k < gs[size_t(g) + 1]; ++k) {
      Eigen::Index r = ord.by_time[size_t(k)];
      if (d.event[r] != 1.0 || w[r] == 0.0) continue;
      dk += w[r];
      out.loglik += w[r] * (eta[r] - std::log(s0));
      if (want_derivatives) {
        Eigen::VectorXd xb = s1 / s0;
        out.score.noalias() += w[r] * (d.X.row(r).transpose() - xb);
        out.information.noalias() += w[r] * (s2 / s0 - xb * xb.transpose());
      }
    }
    if (dk > 0.0 && want_aggregates) {
      Eigen::Index r0 = ord.by_time[size_t(gs[size_t(g)])];
      out.event_time.push_back(d.time[r0]);
      out.d_over_s0.push_back(dk / s0);
      out.xbar.push_back(s1 / s0);
      out.s2_over_s0.push_back(s2 / s0);
    }
  }
  if (want_aggregates) {
    std::reverse(out.event_time.begin(), out.event_time.end());
    std::reverse(out.d_over_s0.begin(), out.d_over_s0.end());
    std::reverse(out.xbar.begin(), out.xbar.end());
    std::reverse(out.s2_over_s0.begin(), out.s2_over_s0.end());
  }
  return out;
}

void validate_cox(const Design& d, const Eigen::VectorXd& w) {
  bool any_event = false;
  for (Eigen::Index r = 0; r < d.n_rows(); ++r) {
    if (d.event[r] != 0.0 && d.event[r] != 1.0)
      throw InputError("cox event indicator must be 0/1");
    if (!(d.time[r] > 0.0)) throw InputError("cox event time must be positive");
    if (d.event[r] == 1.0 && w[r] > 0.0) any_event = true;
  }
  if (!any_event) throw InputError("cox fit needs at least one event with positive weight");
}

}  // namespace

double cox_loglik(const Design& d, const Eigen::VectorXd& w, const Eigen::VectorXd& theta) {
  CoxOrder ord = sort_rows(d);
  return cox_sweep(d, w, theta, ord, false, false).loglik;
}

void cox_score_information(const Design& d, const Eigen::VectorXd& w,
                           const Eigen::VectorXd& theta, Eigen::VectorXd* score,
                           Eigen::MatrixXd* information) {
  CoxOrder ord = sort_rows(d);
  SweepResult s = cox_sweep(d, w, theta, ord, true, false);
  if (score) *score = s.score;
  if (information) *information = s.information;
}

FitResult fit_cox(const Design& d, const Eigen::VectorXd& w, const FitOptions& opt) {
  const Eigen::Index n = d.n_rows(), q = d.n_coefs();
  validate_cox(d, w);
  require_full_rank(d.X, w);
  CoxOrder ord = sort_rows(d);

  const double score_tol = opt.score_tol * double(n);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(q);
  SweepResult cur = cox_sweep(d, w, theta, ord, true, false);
  double last_rel_change = std::numeric_limits<double>::infinity();
  int iter = 0;
  bool converged = false;

  while (iter < opt.max_iterations) {
    if (cur.score.lpNorm<Eigen::Infinity>() < score_tol &&
        (iter == 0 || last_rel_change < opt.loglik_tol)) {
      converged = true;
      break;
    }
    ++iter;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(cur.information);
    if (ldlt.info() != Eigen::Success)
      throw NumericError("singular information matrix in cox fit");
    Eigen::VectorXd step = ldlt.solve(cur.score);

    Eigen::VectorXd candidate = theta;
    SweepResult next = cur;
    double scale = 1.0;
    const double slack = 1e-11 * (1.0 + std::abs(cur.loglik));
    for (int h = 0; h <= 20; ++h) {
      candidate = theta + scale * step;
      next = cox_sweep(d, w, candidate, ord, true, false);
      if (next.loglik >= cur.loglik - slack || h == 20) break;
      scale *= 0.5;
    }
    last_rel_change = std::abs(next.loglik - cur.loglik) / (1.0 + std::abs(next.loglik));
    theta = candidate;
    cur = std::move(next);
    if (theta.lpNorm<Eigen::Infinity>() > opt.coef_bound)
      throw NumericError("cox fit diverged: coefficient bound exceeded");
  }
  if (!converged)
    throw NumericError("cox fit did not converge in " + std::to_string(opt.max_iterations) +
                       " iterations");

  SweepResult agg = cox_sweep(d, w, theta, ord, true, true);

  FitResult fit;
  fit.family = Family::Cox;
  fit.theta = theta;
  fit.coef_names = d.coef_names;
  fit.converged = true;
  fit.iterations = iter;
  fit.loglik = agg.loglik;
  fit.weighted_information = agg.information;

  // Score residuals: U_r = delta_r (x_r - xbar(T_r))
  //                      - exp(eta_r) [x_r A(T_r) - B(T_r)]
  // with A(t) = sum_{t_k <= t} d_k/S0_k and B(t) = sum_{t_k <= t} xbar_k d_k/S0_k.
  // Event rows additionally carry J_r = S2/S0 - xbar xbar' at their own time,
  // so the weighted row contributions sum to the partial-likelihood score and
  // information exactly.
  const size_t n_events = agg.event_time.size();
  std::vector<double> cum_a(n_events);
  std::vector<Eigen::VectorXd> cum_b(n_events);
  double a = 0.0;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(q);
  for (size_t k = 0; k < n_events; ++k) {
    a += agg.d_over_s0[k];
    b += agg.d_over_s0[k] * agg.xbar[k];
    cum_a[k] = a;
    cum_b[k] = b;
  }

  Eigen::VectorXd eta = d.X * theta;
  fit.row_scores.resize(n, q);
  fit.row_info_packed = Eigen::MatrixXd::Zero(n, packed_size(q));
  for (Eigen::Index r = 0; r < n; ++r) {
    double t = d.time[r];
    // last event time index with event_time <= t
    auto it = std::upper_bound(agg.event_time.begin(), agg.event_time.end(), t);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(q);
    if (it != agg.event_time.begin()) {
      size_t k = size_t(it - agg.event_time.begin()) - 1;
      u -= std::exp(eta[r]) * (cum_a[k] * d.X.row(r).transpose() - cum_b[k]);
    }
    if (d.event[r] == 1.0) {
      auto pos = std::lower_bound(agg.event_time.begin(), agg.event_time.end(), t);
      size_t k = size_t(pos - agg.event_time.begin());
      if (k < n_events && agg.event_time[k] == t) {
        u += d.X.row(r).transpose() - agg.xbar[k];
        Eigen::MatrixXd jr = agg.s2_over_s0[k] - agg.xbar[k] * agg.xbar[k].transpose();
        pack_symmetric(jr, fit.row_info_packed.row(r));
      }
    }
    fit.row_scores.row(r) = u.transpose();
  }
  return fit;
}

}  // namespace stackmi::detail

namespace stackmi {

double BaselineHazard::cumhaz_at(double t) const {
  if (times.size() == 0) throw Error("empty baseline hazard");
  if (t <= 0.0) return 0.0;
  // index of first event time >= t
  Eigen::Index lo = 0, hi = times.size();
  while (lo < hi) {
    Eigen::Index mid = (lo + hi) / 2;
    if (times[mid] < t) lo = mid + 1; else hi = mid;
  }
  if (lo == times.size()) return cumhaz[times.size() - 1];  // flat beyond support
  double prev_t = lo == 0 ? 0.0 : times[lo - 1];
  double prev_h = lo == 0 ? 0.0 : cumhaz[lo - 1];
  return prev_h + rate[lo] * (t - prev_t);
}

double BaselineHazard::rate_at(double t) const {
  if (times.size() == 0) throw Error("empty baseline hazard");
  Eigen::Index lo = 0, hi = times.size();
  while (lo < hi) {
    Eigen::Index mid = (lo + hi) / 2;
    if (times[mid] < t) lo = mid + 1; else hi = mid;
  }
  if (lo == times.size()) return rate[times.size() - 1];  // last interval's rate
  return rate[lo];
}

BaselineHazard breslow_baseline(const Design& d, const Eigen::VectorXd& w,
                                const Eigen::VectorXd& theta) {
  if (d.family != Family::Cox) throw InputError("breslow baseline needs a cox design");
  detail::validate_weights(w, d.n_rows());

  std::vector<Eigen::Index> order(size_t(d.n_rows()));
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  std::stable_sort(order.begin(), order.end(),
                   [&d](Eigen::Index a, Eigen::Index b) { return d.time[a] > d.time[b]; });

  Eigen::VectorXd eta = d.X * theta;
  double s0 = 0.0;
  std::vector<double> times, increments;
  size_t i = 0;
  while (i < order.size()) {
    double t = d.time[order[i]];
    double dk = 0.0;
    size_t j = i;
    for (; j < order.size() && d.time[order[j]] == t; ++j) {
      Eigen::Index r = order[j];
      s0 += w[r] * std::exp(eta[r]);
      if (d.event[r] == 1.0) dk += w[r];
    }
    if (dk > 0.0) {
      times.push_back(t);
      increments.push_back(dk / s0);
    }
    i = j;
  }
  if (times.empty()) throw InputError("breslow baseline: no events");
  std::reverse(times.begin(), times.end());
  std::reverse(increments.begin(), increments.end());

  BaselineHazard base;
  const Eigen::Index K = Eigen::Index(times.size());
  base.times.resize(K);
  base.cumhaz.resize(K);
  base.rate.resize(K);
  double cum = 0.0, prev_t = 0.0;
  for (Eigen::Index k = 0; k < K; ++k) {
    cum += increments[size_t(k)];
    base.times[k] = times[size_t(k)];
    base.cumhaz[k] = cum;
    base.rate[k] = increments[size_t(k)] / (times[size_t(k)] - prev_t);
    prev_t = times[size_t(k)];
  }
  return base;
}

}  // namespace stackmi
