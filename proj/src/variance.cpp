#include "stackmi/variance.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "stackmi/errors.hpp"

namespace stackmi {

std::string variance_method_name(VarianceMethod m) {
  switch (m) {
    case VarianceMethod::Louis: return "louis";
    case VarianceMethod::Sandwich: return "sandwich";
    case VarianceMethod::Wood: return "wood";
    case VarianceMethod::Rubin: return "rubin";
    case VarianceMethod::Model: return "model";
  }
  return "?";
}

VarianceMethod parse_variance_method(const std::string& text) {
  if (text == "louis") return VarianceMethod::Louis;
  if (text == "sandwich") return VarianceMethod::Sandwich;
  if (text == "wood") return VarianceMethod::Wood;
  if (text == "rubin") return VarianceMethod::Rubin;
  if (text == "model") return VarianceMethod::Model;
  throw InputError("unknown variance method '" + text + "'");
}

namespace {

void require_weights(const StackedTable& s) {
  if (!s.weights_set()) throw InputError("stacked table has no weights");
}

// Inverts a symmetric matrix, clipping eigenvalues at a floor when it is not
// positive definite.
Eigen::MatrixXd invert_psd(const Eigen::MatrixXd& m, bool* psd, int* clipped) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  if (eig.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
  Eigen::VectorXd vals = eig.eigenvalues();
  *psd = vals.minCoeff() > 0.0;
  *clipped = 0;
  const double floor = 1e-10;
  Eigen::VectorXd inv(vals.size());
  for (Eigen::Index i = 0; i < vals.size(); ++i) {
    double v = vals[i];
    if (v < floor) {
      v = floor;
      ++*clipped;
    }
    inv[i] = 1.0 / v;
  }
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

void fill_se(VarianceReport& rep) {
  rep.se.resize(rep.covariance.rows());
  for (Eigen::Index i = 0; i < rep.se.size(); ++i)
    rep.se[i] = std::sqrt(std::max(0.0, rep.covariance(i, i)));
}

}  // namespace

VarianceReport louis_variance(const StackedTable& stacked, const FitResult& fit) {
  require_weights(stacked);
  const Eigen::Index q = fit.theta.size();
  if (fit.row_scores.rows() != stacked.n_rows())
    throw InputError("fit row contributions do not match the stacked table");

  // Per subject: sum_m w U, sum_m w U U' and sum_m w, accumulated in one pass.
  std::vector<Eigen::VectorXd> usum(size_t(stacked.n_subjects), Eigen::VectorXd::Zero(q));
  std::vector<Eigen::MatrixXd> uusum(size_t(stacked.n_subjects), Eigen::MatrixXd::Zero(q, q));
  std::vector<double> wsum(size_t(stacked.n_subjects), 0.0);
  for (Eigen::Index r = 0; r < stacked.n_rows(); ++r) {
    size_t i = size_t(stacked.subject[size_t(r)]);
    double w = stacked.weights[r];
    if (w == 0.0) continue;
    Eigen::VectorXd u = fit.row_scores.row(r).transpose();
    usum[i] += w * u;
    uusum[i].noalias() += w * u * u.transpose();
    wsum[i] += w;
  }

  Eigen::MatrixXd missing_info = Eigen::MatrixXd::Zero(q, q);
  for (Eigen::Index i = 0; i < stacked.n_subjects; ++i) {
    if (wsum[size_t(i)] == 0.0) continue;
    missing_info += uusum[size_t(i)] -
                    usum[size_t(i)] * usum[size_t(i)].transpose() / wsum[size_t(i)];
  }

  Eigen::MatrixXd observed_info = fit.weighted_information - missing_info;

  VarianceReport rep;
  rep.method = VarianceMethod::Louis;
  rep.coef_names = fit.coef_names;
  rep.covariance = invert_psd(observed_info, &rep.psd, &rep.clipped_eigenvalues);
  fill_se(rep);
  return rep;
}

VarianceReport sandwich_variance(const StackedTable& stacked, const FitResult& fit) {
  require_weights(stacked);
  const Eigen::Index q = fit.theta.size();
  if (fit.row_scores.rows() != stacked.n_rows())
    throw InputError("fit row contributions do not match the stacked table");

  Eigen::MatrixXd bread;
  {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(fit.weighted_information);
    if (ldlt.info() != Eigen::Success)
      throw NumericError("singular information matrix in sandwich variance");
    bread = ldlt.solve(Eigen::MatrixXd::Identity(q, q));
  }
  // Each stacked row enters as its own observation, so the estimator sees
  // only within-imputation variation.
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(q, q);
  for (Eigen::Index r = 0; r < stacked.n_rows(); ++r) {
    Eigen::VectorXd g = stacked.weights[r] * fit.row_scores.row(r).transpose();
    meat.noalias() += g * g.transpose();
  }

  VarianceReport rep;
  rep.method = VarianceMethod::Sandwich;
  rep.coef_names = fit.coef_names;
  rep.covariance = bread * meat * bread;
  fill_se(rep);
  return rep;
}

VarianceReport wood_variance(const StackedTable& stacked, const FitResult& fit,
                             const Eigen::VectorXd& missing_fractions) {
  require_weights(stacked);
  const Eigen::Index q = fit.theta.size();
  if (missing_fractions.size() != q)
    throw InputError("missing fractions do not match coefficient count");
  for (Eigen::Index j = 0; j < q; ++j) {
    double f = missing_fractions[j];
    if (!(f >= 0.0) || f >= 1.0)
      throw InputError("missing fraction must lie in [0, 1) for coefficient " +
                       fit.coef_names[size_t(j)]);
  }

  VarianceReport rep;
  rep.method = VarianceMethod::Wood;
  rep.coef_names = fit.coef_names;
  rep.covariance = fit.model_covariance();
  Eigen::VectorXd factor(q);
  for (Eigen::Index j = 0; j < q; ++j) {
    double f = missing_fractions[j];
    factor[j] = f > 0.0 ? 1.0 / f : 1.0;
  }
  for (Eigen::Index a = 0; a < q; ++a)
    for (Eigen::Index b = 0; b < q; ++b)
      rep.covariance(a, b) *= std::sqrt(factor[a] * factor[b]);
  fill_se(rep);
  return rep;
}

Eigen::VectorXd coefficient_missing_fractions(const Table& masked, const OutcomeSpec& spec) {
  Design probe = build_design(spec, masked.columns(), Eigen::MatrixXd::Zero(1, masked.n_cols()));
  Eigen::VectorXd out(Eigen::Index(probe.coef_sources.size()));
  for (size_t k = 0; k < probe.coef_sources.size(); ++k) {
    Eigen::Index miss = 0;
    for (Eigen::Index i = 0; i < masked.n_rows(); ++i)
      for (Eigen::Index j : probe.coef_sources[k])
        if (!masked.observed(i, j)) {
          ++miss;
          break;
        }
    out[Eigen::Index(k)] = double(miss) / double(masked.n_rows());
  }
  return out;
}

RubinResult rubin_combine(const std::vector<Eigen::VectorXd>& estimates,
                          const std::vector<Eigen::MatrixXd>& covariances,
                          const std::vector<std::string>& coef_names) {
  const size_t m = estimates.size();
  if (m < 2) throw InputError("rubin combination needs at least two imputations");
  if (covariances.size() != m)
    throw InputError("rubin combination: estimate and covariance counts differ");
  const Eigen::Index q = estimates[0].size();
  for (const auto& e : estimates)
    if (e.size() != q) throw InputError("rubin combination: estimate dimensions differ");
  for (const auto& v : covariances)
    if (v.rows() != q || v.cols() != q)
      throw InputError("rubin combination: covariance dimensions differ");

  Eigen::VectorXd pooled = Eigen::VectorXd::Zero(q);
  for (const auto& e : estimates) pooled += e;
  pooled /= double(m);

  Eigen::MatrixXd within = Eigen::MatrixXd::Zero(q, q);
  for (const auto& v : covariances) within += v;
  within /= double(m);

  Eigen::MatrixXd between = Eigen::MatrixXd::Zero(q, q);
  for (const auto& e : estimates) between.noalias() += (e - pooled) * (e - pooled).transpose();
  between /= double(m - 1);

  RubinResult out;
  out.pooled = pooled;
  out.report.method = VarianceMethod::Rubin;
  out.report.coef_names = coef_names;
  out.report.covariance = within + (1.0 + 1.0 / double(m)) * between;
  out.report.se.resize(q);
  for (Eigen::Index i = 0; i < q; ++i)
    out.report.se[i] = std::sqrt(std::max(0.0, out.report.covariance(i, i)));
  return out;
}

void write_estimates_csv(const std::string& path, const std::vector<std::string>& coef_names,
                         const Eigen::VectorXd& estimates,
                         const std::vector<VarianceReport>& reports) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << "coefficient,estimate,se,ci_low,ci_high,method\n";
  char buf[160];
  for (const auto& rep : reports) {
    for (Eigen::Index j = 0; j < estimates.size(); ++j) {
      double se = rep.se[j];
      std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%.17g,%s\n",
                    coef_names[size_t(j)].c_str(), estimates[j], se, estimates[j] - 1.96 * se,
                    estimates[j] + 1.96 * se, variance_method_name(rep.method).c_str());
      out << buf;
    }
  }
}

}  // namespace stackmi
