#include "stackmi/stack.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "stackmi/errors.hpp"

namespace stackmi {

StackMode parse_stack_mode(const std::string& text) {
  if (text == "tall") return StackMode::Tall;
  if (text == "short") return StackMode::Short;
  throw InputError("unknown stack mode '" + text + "' (expected tall or short)");
}

WeightMode parse_weight_mode(const std::string& text) {
  if (text == "mle") return WeightMode::Mle;
  if (text == "draw") return WeightMode::Draw;
  if (text == "unit" || text == "unit-1/M" || text == "1/M") return WeightMode::Unit;
  throw InputError("unknown weight mode '" + text + "' (expected mle, draw or unit)");
}

int StackedTable::appearances(Eigen::Index subj) const {
  int count = 0;
  for (Eigen::Index r = 0; r < n_rows(); ++r)
    if (subject[size_t(r)] == subj) ++count;
  return count;
}

StackedTable stack(const std::vector<Table>& imputed, StackMode mode) {
  if (imputed.size() < 2) throw InputError("stacking needs at least two imputations");
  const Table& first = imputed[0];
  const Eigen::Index n = first.n_rows(), p = first.n_cols();
  for (const Table& t : imputed) {
    if (t.n_rows() != n || t.n_cols() != p)
      throw InputError("stack: imputed tables have mismatched dimensions");
    for (Eigen::Index j = 0; j < p; ++j)
      if (t.column(j).name != first.column(j).name)
        throw InputError("stack: imputed tables have mismatched columns");
    // completed tables mark imputed cells observed, so cell provenance is
    // invisible here; masks must agree and still-missing cells must match up
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < p; ++j)
        if (t.observed(i, j) != first.observed(i, j))
          throw InputError("stack: imputed tables have mismatched masks");
  }
  const int m = int(imputed.size());

  StackedTable s;
  s.columns = first.columns();
  s.mode = mode;
  s.m_imputations = m;
  s.n_subjects = n;

  if (mode == StackMode::Tall) {
    s.values.resize(Eigen::Index(m) * n, p);
    s.subject.reserve(size_t(m) * size_t(n));
    s.imputation.reserve(size_t(m) * size_t(n));
    for (int k = 0; k < m; ++k)
      for (Eigen::Index i = 0; i < n; ++i) {
        s.values.row(Eigen::Index(k) * n + i) = imputed[size_t(k)].values().row(i);
        s.subject.push_back(i);
        s.imputation.push_back(k + 1);
      }
    return s;
  }

  // Short mode: subjects whose row is identical across every imputation
  // appear once.
  std::vector<bool> shared(size_t(n), true);
  Eigen::Index rows = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int k = 1; k < m && shared[size_t(i)]; ++k)
      for (Eigen::Index j = 0; j < p; ++j)
        if (imputed[size_t(k)].value(i, j) != first.value(i, j) ||
            imputed[size_t(k)].observed(i, j) != first.observed(i, j)) {
          shared[size_t(i)] = false;
          break;
        }
    rows += shared[size_t(i)] ? 1 : m;
  }
  s.values.resize(rows, p);
  s.subject.reserve(size_t(rows));
  s.imputation.reserve(size_t(rows));
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (shared[size_t(i)]) {
      s.values.row(r++) = first.values().row(i);
      s.subject.push_back(i);
      s.imputation.push_back(0);
    } else {
      for (int k = 0; k < m; ++k) {
        s.values.row(r++) = imputed[size_t(k)].values().row(i);
        s.subject.push_back(i);
        s.imputation.push_back(k + 1);
      }
    }
  }
  return s;
}

Design build_design(const OutcomeSpec& spec, const StackedTable& stacked) {
  return build_design(spec, stacked.columns, stacked.values);
}

CompleteCaseFit complete_case_fit(const Table& table, const OutcomeSpec& spec) {
  spec.validate(table.columns());
  std::vector<Eigen::Index> cols;
  for (const auto& name : spec.referenced_columns()) cols.push_back(table.column_index(name));
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < table.n_rows(); ++i)
    if (table.row_complete(i, cols)) rows.push_back(i);

  Design probe = build_design(spec, table.columns(), Eigen::MatrixXd::Zero(1, table.n_cols()));
  if (Eigen::Index(rows.size()) < probe.n_coefs() + 2)
    throw NumericError("too few complete cases (" + std::to_string(rows.size()) + ") to fit " +
                       std::to_string(probe.n_coefs()) + " coefficients");

  Eigen::MatrixXd sub(Eigen::Index(rows.size()), table.n_cols());
  for (Eigen::Index r = 0; r < sub.rows(); ++r) sub.row(r) = table.values().row(rows[size_t(r)]);

  CompleteCaseFit cc;
  cc.spec = spec;
  cc.n_complete = Eigen::Index(rows.size());
  Design d = build_design(spec, table.columns(), sub);
  cc.fit = fit_unweighted(d);
  if (spec.family == Family::Cox)
    cc.baseline = breslow_baseline(d, Eigen::VectorXd::Ones(d.n_rows()), cc.fit.theta);
  return cc;
}

namespace {

// Subjects whose rows are identical across all appearances get uniform
// weights; this covers complete-case subjects in both stack modes.
bool rows_identical(const StackedTable& s, const std::vector<Eigen::Index>& rows) {
  for (size_t k = 1; k < rows.size(); ++k)
    if (s.values.row(rows[k]) != s.values.row(rows[0])) return false;
  return true;
}

std::vector<std::vector<Eigen::Index>> rows_by_subject(const StackedTable& s) {
  std::vector<std::vector<Eigen::Index>> out(size_t(s.n_subjects));
  for (Eigen::Index r = 0; r < s.n_rows(); ++r) out[size_t(s.subject[size_t(r)])].push_back(r);
  return out;
}

}  // namespace

StackedTable compute_weights(const StackedTable& stacked, const CompleteCaseFit& cc,
                             WeightMode mode, Rng rng, WeightDiagnostics* diag) {
  if (mode == WeightMode::Unit) return unit_mi_weights(stacked);

  StackedTable out = stacked;
  out.weights.resize(stacked.n_rows());
  const Family family = cc.spec.family;
  const BaselineHazard* base = cc.baseline ? &*cc.baseline : nullptr;

  Design d = build_design(cc.spec, stacked);

  // Draw mode: one parameter draw per imputation index, shared by all
  // subjects. The baseline hazard stays at its complete-case estimate.
  std::vector<Eigen::VectorXd> thetas(size_t(stacked.m_imputations) + 1, cc.fit.theta);
  std::vector<double> sigma2s(size_t(stacked.m_imputations) + 1, cc.fit.sigma2);
  if (mode == WeightMode::Draw) {
    Eigen::LLT<Eigen::MatrixXd> llt(cc.fit.weighted_information);
    if (llt.info() != Eigen::Success)
      throw NumericError("singular complete-case information; cannot draw parameters");
    for (int m = 1; m <= stacked.m_imputations; ++m) {
      Rng stream = rng.split(uint64_t(m));
      Eigen::VectorXd z(cc.fit.theta.size());
      for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = stream.normal();
      thetas[size_t(m)] = cc.fit.theta + llt.matrixU().solve(z);
      if (family == Family::Gaussian) {
        double df = double(cc.n_complete) - double(cc.fit.theta.size());
        sigma2s[size_t(m)] = cc.fit.sigma2 * double(cc.n_complete) / stream.chi_square(df);
      }
    }
  }

  auto groups = rows_by_subject(stacked);
  for (const auto& rows : groups) {
    if (rows.empty()) continue;
    if (rows.size() == 1 || rows_identical(stacked, rows)) {
      for (Eigen::Index r : rows) out.weights[r] = 1.0 / double(rows.size());
      continue;
    }
    double mx = -std::numeric_limits<double>::infinity();
    std::vector<double> logf(rows.size());
    for (size_t k = 0; k < rows.size(); ++k) {
      int m = stacked.imputation[size_t(rows[k])];
      logf[k] = log_density_row(d, rows[k], thetas[size_t(m)], sigma2s[size_t(m)], base);
      mx = std::max(mx, logf[k]);
    }
    if (!std::isfinite(mx)) {
      // every candidate density underflowed to zero; fall back to uniform
      for (Eigen::Index r : rows) out.weights[r] = 1.0 / double(rows.size());
      if (diag) ++diag->underflow_subjects;
      continue;
    }
    double total = 0.0;
    for (size_t k = 0; k < rows.size(); ++k) {
      logf[k] = std::exp(logf[k] - mx);
      total += logf[k];
    }
    for (size_t k = 0; k < rows.size(); ++k) out.weights[rows[k]] = logf[k] / total;
  }
  return out;
}

StackedTable unit_mi_weights(const StackedTable& stacked) {
  StackedTable out = stacked;
  out.weights.resize(stacked.n_rows());
  std::vector<int> counts(size_t(stacked.n_subjects), 0);
  for (Eigen::Index r = 0; r < stacked.n_rows(); ++r) ++counts[size_t(stacked.subject[size_t(r)])];
  for (Eigen::Index r = 0; r < stacked.n_rows(); ++r)
    out.weights[r] = 1.0 / double(counts[size_t(stacked.subject[size_t(r)])]);
  return out;
}

void write_stacked_csv(const StackedTable& stacked, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << "_subject,_imp";
  if (stacked.weights_set()) out << ",_weight";
  for (const auto& c : stacked.columns) out << ',' << c.name;
  out << '\n';
  char buf[40];
  for (Eigen::Index r = 0; r < stacked.n_rows(); ++r) {
    out << stacked.subject[size_t(r)] << ',' << stacked.imputation[size_t(r)];
    if (stacked.weights_set()) {
      std::snprintf(buf, sizeof buf, "%.17g", stacked.weights[r]);
      out << ',' << buf;
    }
    for (Eigen::Index j = 0; j < Eigen::Index(stacked.columns.size()); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", stacked.values(r, j));
      out << ',' << buf;
    }
    out << '\n';
  }
}

StackedTable read_stacked_csv(const std::string& path, const std::vector<ColumnSpec>& schema) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw InputError("empty file '" + path + "'");

  std::vector<std::string> header;
  {
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        header.push_back(cur);
        cur.clear();
      } else if (c != '\r') {
        cur += c;
      }
    }
    header.push_back(cur);
  }
  if (header.size() < 3 || header[0] != "_subject" || header[1] != "_imp")
    throw InputError("stacked file must start with _subject,_imp columns");
  bool has_weight = header[2] == "_weight";
  size_t data_start = has_weight ? 3 : 2;

  std::vector<ColumnSpec> columns;
  for (size_t j = data_start; j < header.size(); ++j) {
    const ColumnSpec* found = nullptr;
    for (const auto& s : schema)
      if (s.name == header[j]) found = &s;
    if (!found) throw InputError("unknown column '" + header[j] + "' in '" + path + "'");
    columns.push_back(*found);
  }

  std::vector<std::vector<double>> rows;
  std::vector<Eigen::Index> subject;
  std::vector<int> imputation;
  std::vector<double> weights;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        cells.push_back(cur);
        cur.clear();
      } else if (c != '\r') {
        cur += c;
      }
    }
    cells.push_back(cur);
    if (cells.size() != header.size())
      throw InputError("row " + std::to_string(line_no) + " of '" + path +
                       "': wrong cell count");
    subject.push_back(Eigen::Index(std::stoll(cells[0])));
    imputation.push_back(int(std::stol(cells[1])));
    if (has_weight) weights.push_back(std::stod(cells[2]));
    std::vector<double> row;
    for (size_t j = data_start; j < cells.size(); ++j) row.push_back(std::stod(cells[j]));
    rows.push_back(std::move(row));
  }

  StackedTable s;
  s.columns = columns;
  s.subject = std::move(subject);
  s.imputation = std::move(imputation);
  s.values.resize(Eigen::Index(rows.size()), Eigen::Index(columns.size()));
  for (Eigen::Index i = 0; i < s.values.rows(); ++i)
    for (Eigen::Index j = 0; j < s.values.cols(); ++j)
      s.values(i, j) = rows[size_t(i)][size_t(j)];
  if (has_weight) {
    s.weights.resize(Eigen::Index(weights.size()));
    for (Eigen::Index i = 0; i < s.weights.size(); ++i) s.weights[i] = weights[size_t(i)];
  }

  Eigen::Index max_subject = -1;
  int max_imp = 0;
  bool any_shared = false;
  for (size_t r = 0; r < s.subject.size(); ++r) {
    max_subject = std::max(max_subject, s.subject[r]);
    max_imp = std::max(max_imp, s.imputation[r]);
    if (s.imputation[r] == 0) any_shared = true;
  }
  s.n_subjects = max_subject + 1;
  s.m_imputations = max_imp;
  s.mode = any_shared ? StackMode::Short : StackMode::Tall;
  if (!any_shared) {
    // a short stack of all-incomplete subjects is indistinguishable; row
    // counts decide
    if (s.n_rows() != Eigen::Index(s.m_imputations) * s.n_subjects) s.mode = StackMode::Short;
  }
  return s;
}

}  // namespace stackmi
