#include "stackmi/table.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "stackmi/errors.hpp"

namespace stackmi {

std::string role_name(ColumnRole role) {
  switch (role) {
    case ColumnRole::Continuous: return "continuous";
    case ColumnRole::Binary: return "binary";
    case ColumnRole::Categorical: return "categorical";
    case ColumnRole::EventTime: return "event-time";
    case ColumnRole::EventIndicator: return "event-indicator";
  }
  return "?";
}

ColumnRole parse_role(const std::string& text, int* levels) {
  if (levels) *levels = 0;
  if (text == "continuous") return ColumnRole::Continuous;
  if (text == "binary") return ColumnRole::Binary;
  if (text == "event-time") return ColumnRole::EventTime;
  if (text == "event-indicator") return ColumnRole::EventIndicator;
  if (text.rfind("categorical", 0) == 0) {
    auto pos = text.find(':');
    if (pos == std::string::npos)
      throw InputError("categorical role needs a level count, e.g. categorical:3");
    int k = std::stoi(text.substr(pos + 1));
    if (k < 2) throw InputError("categorical level count must be >= 2");
    if (levels) *levels = k;
    return ColumnRole::Categorical;
  }
  throw InputError("unknown column role '" + text + "'");
}

Table::Table(std::vector<ColumnSpec> columns, Eigen::MatrixXd values, BoolGrid mask)
    : columns_(std::move(columns)), values_(std::move(values)), mask_(std::move(mask)) {
  validate();
}

Table Table::fully_observed(std::vector<ColumnSpec> columns, Eigen::MatrixXd values) {
  BoolGrid mask = BoolGrid::Constant(values.rows(), values.cols(), true);
  return Table(std::move(columns), std::move(values), std::move(mask));
}

void Table::validate() const {
  if (values_.cols() != Eigen::Index(columns_.size()))
    throw InputError("table: column spec count does not match value grid");
  if (mask_.rows() != values_.rows() || mask_.cols() != values_.cols())
    throw InputError("table: mask and values have different dimensions");
  for (Eigen::Index j = 0; j < n_cols(); ++j) {
    const ColumnSpec& c = columns_[size_t(j)];
    for (Eigen::Index i = 0; i < n_rows(); ++i) {
      if (!mask_(i, j)) continue;
      double v = values_(i, j);
      if (!std::isfinite(v))
        throw InputError("table: non-finite observed value in column '" + c.name + "'");
      switch (c.role) {
        case ColumnRole::EventTime:
          if (!(v > 0.0)) throw InputError("nonpositive event time in column '" + c.name + "'");
          break;
        case ColumnRole::EventIndicator:
          if (v != 0.0 && v != 1.0)
            throw InputError("event indicator outside {0,1} in column '" + c.name + "'");
          break;
        case ColumnRole::Binary:
          if (v != 0.0 && v != 1.0)
            throw InputError("binary value outside {0,1} in column '" + c.name + "'");
          break;
        case ColumnRole::Categorical: {
          double r = std::round(v);
          if (v != r || r < 0.0 || r >= double(c.levels))
            throw InputError("categorical code out of range in column '" + c.name + "'");
          break;
        }
        case ColumnRole::Continuous: break;
      }
    }
  }
}

Eigen::Index Table::column_index(const std::string& name) const {
  for (size_t j = 0; j < columns_.size(); ++j)
    if (columns_[j].name == name) return Eigen::Index(j);
  throw InputError("unknown column '" + name + "'");
}

bool Table::has_column(const std::string& name) const {
  for (const auto& c : columns_)
    if (c.name == name) return true;
  return false;
}

bool Table::column_complete(Eigen::Index j) const { return mask_.col(j).all(); }

Eigen::Index Table::missing_count(Eigen::Index j) const {
  return n_rows() - mask_.col(j).count();
}

bool Table::row_complete(Eigen::Index i) const { return mask_.row(i).all(); }

bool Table::row_complete(Eigen::Index i, const std::vector<Eigen::Index>& cols) const {
  for (Eigen::Index j : cols)
    if (!mask_(i, j)) return false;
  return true;
}

Eigen::Index Table::n_complete_rows() const {
  Eigen::Index n = 0;
  for (Eigen::Index i = 0; i < n_rows(); ++i)
    if (row_complete(i)) ++n;
  return n;
}

std::vector<double> Table::observed_values(Eigen::Index j) const {
  std::vector<double> out;
  out.reserve(size_t(n_rows()));
  for (Eigen::Index i = 0; i < n_rows(); ++i)
    if (mask_(i, j)) out.push_back(values_(i, j));
  return out;
}

const Eigen::MatrixXd& Table::shadow_truth() const {
  if (!shadow_truth_) throw Error("table has no shadow truth");
  return *shadow_truth_;
}

Table Table::shadow_truth_table() const {
  return Table::fully_observed(columns_, shadow_truth());
}

Table Table::with_shadow_truth(Eigen::MatrixXd truth) const {
  Table t(columns_, values_, mask_);
  t.shadow_truth_ = std::move(truth);
  return t;
}

MissingnessMechanism MissingnessMechanism::mcar(std::string target, double p_observed) {
  if (!(p_observed > 0.0 && p_observed <= 1.0))
    throw InputError("mcar: observation probability must be in (0,1]");
  MissingnessMechanism m;
  m.target = std::move(target);
  m.intercept = p_observed >= 1.0 ? 1e9 : std::log(p_observed / (1.0 - p_observed));
  return m;
}

Table apply_missingness(const Table& table, const std::vector<MissingnessMechanism>& mechanisms,
                        Rng rng) {
  Eigen::MatrixXd values = table.values();
  BoolGrid mask = table.mask();

  size_t k = 0;
  for (const auto& mech : mechanisms) {
    Eigen::Index target = table.column_index(mech.target);
    std::vector<Eigen::Index> pred_cols;
    for (const auto& [name, coef] : mech.slopes) {
      Eigen::Index j = table.column_index(name);
      if (j == target)
        throw InputError("missingness mechanism for '" + mech.target + "' predicts from itself");
      if (!table.column_complete(j))
        throw InputError("missingness predictor '" + name + "' has missing values");
      pred_cols.push_back(j);
      (void)coef;
    }
    Rng stream = rng.split(k++);
    for (Eigen::Index i = 0; i < table.n_rows(); ++i) {
      double eta = mech.intercept;
      for (size_t p = 0; p < pred_cols.size(); ++p)
        eta += mech.slopes[p].second * table.value(i, pred_cols[p]);
      double p_obs = 1.0 / (1.0 + std::exp(-eta));
      if (!stream.bernoulli(p_obs)) mask(i, target) = false;
    }
  }

  Table out(table.columns(), std::move(values), std::move(mask));
  return out.with_shadow_truth(table.has_shadow_truth() ? table.shadow_truth() : table.values());
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

}  // namespace

Table load_csv(const std::string& path, const std::vector<ColumnSpec>& schema,
               const std::string& na_token) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw InputError("empty file '" + path + "'");
  std::vector<std::string> header = split_line(line);

  // Map file columns onto the schema by name; every header must be known and
  // every schema column present.
  std::vector<const ColumnSpec*> file_specs;
  for (auto& h : header) {
    std::string name = trim(h);
    const ColumnSpec* found = nullptr;
    for (const auto& s : schema)
      if (s.name == name) found = &s;
    if (!found) throw InputError("unknown column '" + name + "' in '" + path + "'");
    file_specs.push_back(found);
  }
  for (const auto& s : schema) {
    bool present = false;
    for (const auto* fs : file_specs)
      if (fs == &s) present = true;
    if (!present) throw InputError("column '" + s.name + "' missing from '" + path + "'");
  }

  std::vector<std::vector<double>> rows;
  std::vector<std::vector<bool>> obs;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> cells = split_line(line);
    if (cells.size() != file_specs.size())
      throw InputError("row " + std::to_string(line_no) + " of '" + path + "': expected " +
                       std::to_string(file_specs.size()) + " cells, found " +
                       std::to_string(cells.size()));
    std::vector<double> row(file_specs.size(), 0.0);
    std::vector<bool> ob(file_specs.size(), true);
    for (size_t j = 0; j < cells.size(); ++j) {
      std::string cell = trim(cells[j]);
      if (cell == na_token || cell.empty()) {
        row[j] = std::numeric_limits<double>::quiet_NaN();
        ob[j] = false;
        continue;
      }
      char* end = nullptr;
      double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0')
        throw InputError("row " + std::to_string(line_no) + ", column '" + file_specs[j]->name +
                         "' of '" + path + "': cannot parse '" + cell + "'");
      row[j] = v;
    }
    rows.push_back(std::move(row));
    obs.push_back(std::move(ob));
  }

  Eigen::Index n = Eigen::Index(rows.size());
  Eigen::Index p = Eigen::Index(file_specs.size());
  Eigen::MatrixXd values(n, p);
  BoolGrid mask(n, p);
  std::vector<ColumnSpec> columns;
  for (const auto* fs : file_specs) columns.push_back(*fs);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) {
      values(i, j) = rows[size_t(i)][size_t(j)];
      mask(i, j) = obs[size_t(i)][size_t(j)];
    }
  return Table(std::move(columns), std::move(values), std::move(mask));
}

void write_csv(const Table& table, const std::string& path, const std::string& na_token) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  for (Eigen::Index j = 0; j < table.n_cols(); ++j) {
    if (j) out << ',';
    out << table.column(j).name;
  }
  out << '\n';
  char buf[40];
  for (Eigen::Index i = 0; i < table.n_rows(); ++i) {
    for (Eigen::Index j = 0; j < table.n_cols(); ++j) {
      if (j) out << ',';
      if (!table.observed(i, j)) {
        out << na_token;
      } else {
        std::snprintf(buf, sizeof buf, "%.17g", table.value(i, j));
        out << buf;
      }
    }
    out << '\n';
  }
}

}  // namespace stackmi
