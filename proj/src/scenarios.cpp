#include "stackmi/scenarios.hpp"

#include <cmath>

#include "stackmi/errors.hpp"

namespace stackmi {

MvNormal::MvNormal(const Eigen::MatrixXd& covariance) {
  if (covariance.rows() != covariance.cols())
    throw InputError("covariance must be square");
  if (!covariance.isApprox(covariance.transpose(), 1e-12))
    throw InputError("covariance must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success)
    throw InputError("covariance must be positive definite");
  chol_ = llt.matrixL();
}

Eigen::VectorXd MvNormal::sample(Rng& rng) const {
  Eigen::VectorXd z(chol_.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return chol_ * z;
}

namespace {

inline double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Table scenario1(Eigen::Index n, Rng& rng) {
  Eigen::Matrix2d cov;
  cov << 0.49, 0.12, 0.12, 0.09;
  MvNormal mvn(cov);
  Eigen::MatrixXd v(n, 3);
  const double sd_y = std::sqrt(0.55);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd x = mvn.sample(rng);
    v(i, 0) = x[0];
    v(i, 1) = x[1];
    v(i, 2) = 0.53 * x[0] + 1.25 * x[1] + sd_y * rng.normal();
  }
  return Table::fully_observed({{"x1", ColumnRole::Continuous},
                                {"x2", ColumnRole::Continuous},
                                {"y", ColumnRole::Continuous}},
                               std::move(v));
}

Table scenario2(Eigen::Index n, Rng& rng) {
  Eigen::Matrix3d cov;
  cov << 1.0, 0.3, 0.3, 0.3, 1.0, 0.3, 0.3, 0.3, 1.0;
  MvNormal mvn(cov);
  Eigen::MatrixXd v(n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd x = mvn.sample(rng);
    double eta = 0.5 + 0.5 * (x[0] + x[1] + x[2]);
    v(i, 0) = x[0];
    v(i, 1) = x[1];
    v(i, 2) = x[2];
    v(i, 3) = rng.bernoulli(expit(eta)) ? 1.0 : 0.0;
  }
  return Table::fully_observed({{"x1", ColumnRole::Continuous},
                                {"x2", ColumnRole::Continuous},
                                {"x3", ColumnRole::Continuous},
                                {"y", ColumnRole::Binary}},
                               std::move(v));
}

Table scenario3(Eigen::Index n, Rng& rng) {
  Eigen::Matrix2d cov;
  cov << 0.81, 0.59, 0.59, 1.21;
  MvNormal mvn(cov);
  Eigen::MatrixXd v(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd x = mvn.sample(rng);
    v(i, 0) = x[0];
    v(i, 1) = x[1];
    v(i, 2) = x[0] + x[1] + x[0] * x[1] + rng.normal();
  }
  return Table::fully_observed({{"x1", ColumnRole::Continuous},
                                {"x2", ColumnRole::Continuous},
                                {"y", ColumnRole::Continuous}},
                               std::move(v));
}

Table scenario4(Eigen::Index n, Rng& rng) {
  Eigen::Matrix2d cov;
  cov << 1.0, 0.5, 0.5, 1.0;
  MvNormal mvn(cov);
  Eigen::MatrixXd v(n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd x = mvn.sample(rng);
    double rate = std::exp(0.5 * x[0] + 0.5 * x[1]);
    double t = -std::log(rng.uniform_open()) / rate;
    double c = 0.2 + 2.8 * rng.uniform();
    v(i, 0) = x[0];
    v(i, 1) = x[1];
    v(i, 2) = std::min(t, c);
    v(i, 3) = t <= c ? 1.0 : 0.0;
  }
  return Table::fully_observed({{"x1", ColumnRole::Continuous},
                                {"x2", ColumnRole::Continuous},
                                {"time", ColumnRole::EventTime},
                                {"event", ColumnRole::EventIndicator}},
                               std::move(v));
}

}  // namespace

Table generate_scenario(int id, Eigen::Index n, Rng rng) {
  if (n < 1) throw InputError("scenario: n must be positive");
  switch (id) {
    case 1: return scenario1(n, rng);
    case 2: return scenario2(n, rng);
    case 3: return scenario3(n, rng);
    case 4: return scenario4(n, rng);
    default: throw InputError("scenario id must be 1, 2, 3 or 4");
  }
}

std::vector<MissingnessMechanism> scenario_mechanisms(int id, double phi0, double phi1,
                                                      double phi2) {
  std::vector<MissingnessMechanism> out;
  MissingnessMechanism x2;
  x2.target = "x2";
  x2.intercept = phi0;
  switch (id) {
    case 1:
    case 3:
      if (phi1 != 0.0) x2.slopes.emplace_back("x1", phi1);
      if (phi2 != 0.0) x2.slopes.emplace_back("y", phi2);
      out.push_back(std::move(x2));
      break;
    case 2:
      if (phi1 != 0.0) x2.slopes.emplace_back("x1", phi1);
      if (phi2 != 0.0) x2.slopes.emplace_back("y", phi2);
      out.push_back(std::move(x2));
      out.push_back(MissingnessMechanism::mcar("x3", 0.7));
      break;
    case 4:
      if (phi1 != 0.0) x2.slopes.emplace_back("x1", phi1);
      out.push_back(std::move(x2));
      break;
    default:
      throw InputError("scenario id must be 1, 2, 3 or 4");
  }
  return out;
}

std::string mechanism_label(double phi1, double phi2) {
  if (phi1 != 0.0 && phi2 != 0.0) return "X1,Y";
  if (phi1 != 0.0) return "X1";
  if (phi2 != 0.0) return "Y";
  return "MCAR";
}

}  // namespace stackmi
