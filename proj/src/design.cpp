#include "stackmi/design.hpp"

#include <algorithm>

#include "stackmi/errors.hpp"

namespace stackmi {

std::string family_name(Family f) {
  switch (f) {
    case Family::Gaussian: return "gaussian";
    case Family::Bernoulli: return "bernoulli";
    case Family::Cox: return "cox";
  }
  return "?";
}

Family parse_family(const std::string& text) {
  if (text == "gaussian" || text == "gaussian-identity") return Family::Gaussian;
  if (text == "bernoulli" || text == "bernoulli-logit" || text == "logistic")
    return Family::Bernoulli;
  if (text == "cox" || text == "cox-ph") return Family::Cox;
  throw InputError("unknown outcome family '" + text + "'");
}

std::vector<std::string> OutcomeSpec::response_columns() const {
  if (family == Family::Cox) return {time, event};
  return {response};
}

std::vector<std::string> OutcomeSpec::referenced_columns() const {
  std::vector<std::string> out = response_columns();
  auto add = [&out](const std::string& name) {
    if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
  };
  for (const auto& t : terms) add(t);
  for (const auto& it : interactions) {
    add(it.a);
    add(it.b);
  }
  return out;
}

void OutcomeSpec::validate(const std::vector<ColumnSpec>& schema) const {
  auto find = [&schema](const std::string& name) -> const ColumnSpec* {
    for (const auto& c : schema)
      if (c.name == name) return &c;
    return nullptr;
  };
  auto require = [&](const std::string& name) {
    if (!find(name)) throw InputError("outcome model references unknown column '" + name + "'");
  };
  if (family == Family::Cox) {
    require(time);
    require(event);
    if (find(time)->role != ColumnRole::EventTime)
      throw InputError("cox time column '" + time + "' must have role event-time");
    if (find(event)->role != ColumnRole::EventIndicator)
      throw InputError("cox event column '" + event + "' must have role event-indicator");
  } else {
    require(response);
  }
  for (const auto& t : terms) require(t);
  auto is_term = [this](const std::string& name) {
    return std::find(terms.begin(), terms.end(), name) != terms.end();
  };
  for (const auto& it : interactions) {
    if (!is_term(it.a) || !is_term(it.b))
      throw InputError("interaction " + it.a + ":" + it.b +
                       " references a column that is not a main-effect term");
  }
}

namespace {

// Expanded columns for one term: (coefficient name suffix, column evaluator).
struct Expansion {
  std::vector<std::string> names;
  std::vector<Eigen::VectorXd> cols;
};

Expansion expand_term(const ColumnSpec& spec, const Eigen::VectorXd& raw) {
  Expansion e;
  if (spec.role == ColumnRole::Categorical) {
    for (int level = 1; level < spec.levels; ++level) {
      e.names.push_back(spec.name + "=" + std::to_string(level));
      e.cols.push_back((raw.array() == double(level)).cast<double>());
    }
  } else {
    e.names.push_back(spec.name);
    e.cols.push_back(raw);
  }
  return e;
}

}  // namespace

Design build_design(const OutcomeSpec& spec, const std::vector<ColumnSpec>& schema,
                    const Eigen::MatrixXd& values) {
  spec.validate(schema);
  auto col_index = [&schema](const std::string& name) {
    for (size_t j = 0; j < schema.size(); ++j)
      if (schema[j].name == name) return Eigen::Index(j);
    throw InputError("unknown column '" + name + "'");
  };

  Design d;
  d.family = spec.family;
  const Eigen::Index n = values.rows();

  std::vector<Eigen::VectorXd> cols;
  if (spec.has_intercept()) {
    d.coef_names.push_back("(intercept)");
    d.coef_sources.push_back({});
    cols.push_back(Eigen::VectorXd::Ones(n));
  }
  for (const auto& term : spec.terms) {
    Eigen::Index j = col_index(term);
    Expansion e = expand_term(schema[size_t(j)], values.col(j));
    for (size_t k = 0; k < e.cols.size(); ++k) {
      d.coef_names.push_back(e.names[k]);
      d.coef_sources.push_back({j});
      cols.push_back(std::move(e.cols[k]));
    }
  }
  for (const auto& it : spec.interactions) {
    Eigen::Index ja = col_index(it.a), jb = col_index(it.b);
    Expansion ea = expand_term(schema[size_t(ja)], values.col(ja));
    Expansion eb = expand_term(schema[size_t(jb)], values.col(jb));
    for (size_t a = 0; a < ea.cols.size(); ++a)
      for (size_t b = 0; b < eb.cols.size(); ++b) {
        d.coef_names.push_back(ea.names[a] + ":" + eb.names[b]);
        d.coef_sources.push_back({ja, jb});
        cols.push_back(ea.cols[a].cwiseProduct(eb.cols[b]));
      }
  }

  d.X.resize(n, Eigen::Index(cols.size()));
  for (size_t k = 0; k < cols.size(); ++k) d.X.col(Eigen::Index(k)) = cols[k];

  if (spec.family == Family::Cox) {
    d.time = values.col(col_index(spec.time));
    d.event = values.col(col_index(spec.event));
  } else {
    d.y = values.col(col_index(spec.response));
  }
  return d;
}

Eigen::MatrixXd predictor_matrix(const std::vector<ColumnSpec>& schema,
                                 const Eigen::MatrixXd& values,
                                 const std::vector<Eigen::Index>& rows,
                                 const std::vector<Eigen::Index>& predictor_cols) {
  Eigen::Index q = 1;
  for (Eigen::Index j : predictor_cols) {
    const ColumnSpec& c = schema[size_t(j)];
    q += c.role == ColumnRole::Categorical ? c.levels - 1 : 1;
  }
  Eigen::MatrixXd Z(Eigen::Index(rows.size()), q);
  for (Eigen::Index r = 0; r < Eigen::Index(rows.size()); ++r) {
    Eigen::Index i = rows[size_t(r)];
    Eigen::Index k = 0;
    Z(r, k++) = 1.0;
    for (Eigen::Index j : predictor_cols) {
      const ColumnSpec& c = schema[size_t(j)];
      if (c.role == ColumnRole::Categorical) {
        for (int level = 1; level < c.levels; ++level)
          Z(r, k++) = values(i, j) == double(level) ? 1.0 : 0.0;
      } else {
        Z(r, k++) = values(i, j);
      }
    }
  }
  return Z;
}

}  // namespace stackmi
