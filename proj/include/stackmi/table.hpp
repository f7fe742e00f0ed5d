#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stackmi/rng.hpp"

namespace stackmi {

enum class ColumnRole { Continuous, Binary, Categorical, EventTime, EventIndicator };

std::string role_name(ColumnRole role);
ColumnRole parse_role(const std::string& text, int* levels);

struct ColumnSpec {
  std::string name;
  ColumnRole role = ColumnRole::Continuous;
  int levels = 0;  // categorical only: codes live in [0, levels)
};

using BoolGrid = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Rectangular numeric dataset with per-column roles and an observation mask
// (true = observed). Immutable after construction; imputation and masking
// produce new tables. A table produced by apply_missingness keeps a shadow
// copy of the pre-masking values for simulation bookkeeping.
class Table {
 public:
  Table(std::vector<ColumnSpec> columns, Eigen::MatrixXd values, BoolGrid mask);

  static Table fully_observed(std::vector<ColumnSpec> columns, Eigen::MatrixXd values);

  Eigen::Index n_rows() const { return values_.rows(); }
  Eigen::Index n_cols() const { return values_.cols(); }

  const std::vector<ColumnSpec>& columns() const { return columns_; }
  const ColumnSpec& column(Eigen::Index j) const { return columns_[size_t(j)]; }
  Eigen::Index column_index(const std::string& name) const;  // throws InputError
  bool has_column(const std::string& name) const;

  double value(Eigen::Index i, Eigen::Index j) const { return values_(i, j); }
  bool observed(Eigen::Index i, Eigen::Index j) const { return mask_(i, j); }
  const Eigen::MatrixXd& values() const { return values_; }
  const BoolGrid& mask() const { return mask_; }

  bool column_complete(Eigen::Index j) const;
  Eigen::Index missing_count(Eigen::Index j) const;
  bool row_complete(Eigen::Index i) const;
  bool row_complete(Eigen::Index i, const std::vector<Eigen::Index>& cols) const;
  Eigen::Index n_complete_rows() const;
  std::vector<double> observed_values(Eigen::Index j) const;

  // Pre-masking values, present only on tables returned by apply_missingness.
  bool has_shadow_truth() const { return shadow_truth_.has_value(); }
  const Eigen::MatrixXd& shadow_truth() const;
  Table shadow_truth_table() const;  // fully observed table of the pre-mask values

  Table with_shadow_truth(Eigen::MatrixXd truth) const;

 private:
  void validate() const;

  std::vector<ColumnSpec> columns_;
  Eigen::MatrixXd values_;
  BoolGrid mask_;
  std::optional<Eigen::MatrixXd> shadow_truth_;
};

// Missingness mechanism for one target column. The observation probability is
// expit(intercept + sum_j slope_j * predictor_j); an empty slope list is MCAR.
struct MissingnessMechanism {
  std::string target;
  double intercept = 0.0;
  std::vector<std::pair<std::string, double>> slopes;

  static MissingnessMechanism mcar(std::string target, double p_observed);
};

// Independently hides each mechanism's target cell with probability
// 1 - expit(phi' z). Observed cells are carried over bit-identical; the
// pre-mask values are retained as shadow truth.
Table apply_missingness(const Table& table, const std::vector<MissingnessMechanism>& mechanisms,
                        Rng rng);

Table load_csv(const std::string& path, const std::vector<ColumnSpec>& schema,
               const std::string& na_token = "NA");
void write_csv(const Table& table, const std::string& path, const std::string& na_token = "NA");

}  // namespace stackmi
