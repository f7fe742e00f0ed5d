#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stackmi/design.hpp"
#include "stackmi/outcome_models.hpp"
#include "stackmi/rng.hpp"
#include "stackmi/table.hpp"

namespace stackmi {

enum class StackMode { Tall, Short };
enum class WeightMode { Mle, Draw, Unit };

StackMode parse_stack_mode(const std::string& text);
WeightMode parse_weight_mode(const std::string& text);

// Concatenation of M imputed tables. Every row is tagged with its subject and
// imputation index; rows identical across all imputations may appear once
// (short mode, imputation index 0). Weights are empty until a weighting
// operation sets them; they then sum to 1 within every subject.
struct StackedTable {
  std::vector<ColumnSpec> columns;
  Eigen::MatrixXd values;
  std::vector<Eigen::Index> subject;  // per row
  std::vector<int> imputation;        // 1..M, or 0 for a shared row
  Eigen::VectorXd weights;            // size 0 until assigned
  StackMode mode = StackMode::Tall;
  int m_imputations = 0;
  Eigen::Index n_subjects = 0;

  Eigen::Index n_rows() const { return values.rows(); }
  bool weights_set() const { return weights.size() == n_rows(); }
  int appearances(Eigen::Index subj) const;  // rows carrying this subject
};

StackedTable stack(const std::vector<Table>& imputed, StackMode mode);

// Analysis-model fit restricted to rows with every referenced column observed.
// Cox fits also carry the Breslow baseline with its piecewise-constant rate.
struct CompleteCaseFit {
  OutcomeSpec spec;
  FitResult fit;
  std::optional<BaselineHazard> baseline;
  Eigen::Index n_complete = 0;
};

CompleteCaseFit complete_case_fit(const Table& table, const OutcomeSpec& spec);

struct WeightDiagnostics {
  Eigen::Index underflow_subjects = 0;  // all densities zero; uniform fallback
};

// Density weights: w_{im} proportional to f(y_i | x_{im}) under the
// complete-case parameters, normalized within subject and computed in log
// space. Mode Draw replaces the point estimate with one parameter draw per
// imputation index; mode Unit ignores the fit and assigns 1/appearances.
// Subjects whose rows are identical across appearances always get uniform
// weights.
StackedTable compute_weights(const StackedTable& stacked, const CompleteCaseFit& cc,
                             WeightMode mode, Rng rng, WeightDiagnostics* diag = nullptr);

// Plain stacked-imputation weighting: 1 / appearances for every row.
StackedTable unit_mi_weights(const StackedTable& stacked);

// CSV with reserved _subject, _imp, _weight columns followed by the data.
void write_stacked_csv(const StackedTable& stacked, const std::string& path);
StackedTable read_stacked_csv(const std::string& path, const std::vector<ColumnSpec>& schema);

Design build_design(const OutcomeSpec& spec, const StackedTable& stacked);

}  // namespace stackmi
