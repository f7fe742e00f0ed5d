#include "stackmi/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace stackmi {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  std::string last = trim(cur);
  if (!last.empty() || !out.empty()) out.push_back(last);
  for (const auto& item : out)
    if (item.empty()) throw ConfigError("empty item in list '" + s + "'");
  return out;
}

struct Line {
  size_t number;
  std::string key, value;
};

struct Section {
  std::string name;
  size_t line;
  std::vector<Line> entries;
};

[[noreturn]] void fail(const std::string& origin, size_t line, const std::string& message) {
  throw ConfigError(origin + ":" + std::to_string(line) + ": " + message);
}

long parse_int(const std::string& origin, const Line& l) {
  try {
    size_t pos = 0;
    long v = std::stol(l.value, &pos);
    if (pos != l.value.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    fail(origin, l.number, "key '" + l.key + "' expects an integer, got '" + l.value + "'");
  }
}

double parse_double(const std::string& origin, const Line& l, const std::string& text) {
  try {
    size_t pos = 0;
    double v = std::stod(text, &pos);
    if (pos != text.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    fail(origin, l.number, "key '" + l.key + "' expects a number, got '" + text + "'");
  }
}

bool parse_bool(const std::string& origin, const Line& l) {
  if (l.value == "true" || l.value == "yes" || l.value == "1") return true;
  if (l.value == "false" || l.value == "no" || l.value == "0") return false;
  fail(origin, l.number, "key '" + l.key + "' expects true or false, got '" + l.value + "'");
}

}  // namespace

uint64_t RunConfig::require_seed() const {
  if (!seed) throw ConfigError("missing 'seed' key: runs must be explicitly seeded");
  return *seed;
}

const OutcomeSpec& RunConfig::require_outcome() const {
  if (!outcome) throw ConfigError("missing [outcome] section");
  return *outcome;
}

std::vector<VarianceMethod> RunConfig::effective_variances() const {
  if (variances.empty()) return {VarianceMethod::Louis};
  return variances;
}

std::vector<ImputerSpec> RunConfig::effective_imputers(const Table& table) const {
  if (!imputers.empty()) return imputers;
  // Default chained-equations setup: every incomplete non-outcome column is
  // imputed from all other non-outcome columns, with the family picked by its
  // role.
  std::vector<std::string> outcome_cols;
  if (outcome) outcome_cols = outcome->response_columns();
  auto is_outcome = [&outcome_cols](const std::string& name) {
    return std::find(outcome_cols.begin(), outcome_cols.end(), name) != outcome_cols.end();
  };
  std::vector<ImputerSpec> out;
  for (Eigen::Index j = 0; j < table.n_cols(); ++j) {
    const ColumnSpec& c = table.column(j);
    if (is_outcome(c.name) || table.column_complete(j)) continue;
    ImputerSpec spec;
    spec.target = c.name;
    spec.family = default_imputer_family(c.role);
    for (Eigen::Index k = 0; k < table.n_cols(); ++k) {
      const ColumnSpec& p = table.column(k);
      if (k == j || is_outcome(p.name)) continue;
      spec.predictors.push_back(p.name);
    }
    out.push_back(std::move(spec));
  }
  return out;
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  // Pass 1: split into the top-level block and named sections.
  std::vector<Section> sections;
  sections.push_back({"", 0, {}});
  std::istringstream in(text);
  std::string raw;
  size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    // strip comments: '#' at start or after whitespace
    for (size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '#' && (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t')) {
        line = line.substr(0, i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(origin, line_no, "unterminated section header");
      sections.push_back({trim(line.substr(1, line.size() - 2)), line_no, {}});
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos) fail(origin, line_no, "expected 'key = value'");
    Line l{line_no, trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
    if (l.key.empty()) fail(origin, line_no, "empty key");
    sections.back().entries.push_back(std::move(l));
  }

  RunConfig cfg;
  bool seen_data = false, seen_outcome = false, seen_mi = false, seen_variance = false;

  for (const auto& sec : sections) {
    if (sec.name.empty()) {
      for (const auto& l : sec.entries) {
        if (l.key == "seed") {
          cfg.seed = uint64_t(parse_int(origin, l));
        } else if (l.key == "threads") {
          cfg.threads = int(parse_int(origin, l));
          if (cfg.threads < 1) fail(origin, l.number, "threads must be >= 1");
        } else {
          fail(origin, l.number, "unknown top-level key '" + l.key + "'");
        }
      }
    } else if (sec.name == "data") {
      if (seen_data) fail(origin, sec.line, "duplicate [data] section");
      seen_data = true;
      for (const auto& l : sec.entries) {
        if (l.key == "path") cfg.data_path = l.value;
        else if (l.key == "na") cfg.na_token = l.value;
        else fail(origin, l.number, "unknown [data] key '" + l.key + "'");
      }
    } else if (sec.name == "column") {
      ColumnSpec col;
      for (const auto& l : sec.entries) {
        if (l.key == "name") {
          col.name = l.value;
        } else if (l.key == "role") {
          try {
            col.role = parse_role(l.value, &col.levels);
          } catch (const std::exception& e) {
            fail(origin, l.number, e.what());
          }
        } else {
          fail(origin, l.number, "unknown [column] key '" + l.key + "'");
        }
      }
      if (col.name.empty()) fail(origin, sec.line, "[column] needs a name");
      for (const auto& existing : cfg.schema)
        if (existing.name == col.name)
          fail(origin, sec.line, "duplicate column '" + col.name + "'");
      cfg.schema.push_back(std::move(col));
    } else if (sec.name == "outcome") {
      if (seen_outcome) fail(origin, sec.line, "duplicate [outcome] section");
      seen_outcome = true;
      OutcomeSpec spec;
      for (const auto& l : sec.entries) {
        try {
          if (l.key == "family") spec.family = parse_family(l.value);
          else if (l.key == "response") spec.response = l.value;
          else if (l.key == "time") spec.time = l.value;
          else if (l.key == "event") spec.event = l.value;
          else if (l.key == "terms") spec.terms = split_list(l.value);
          else if (l.key == "intercept") spec.intercept = parse_bool(origin, l);
          else if (l.key == "interactions") {
            for (const auto& item : split_list(l.value)) {
              size_t colon = item.find(':');
              if (colon == std::string::npos)
                fail(origin, l.number, "interaction '" + item + "' must be written a:b");
              spec.interactions.push_back(
                  {trim(item.substr(0, colon)), trim(item.substr(colon + 1))});
            }
          } else {
            fail(origin, l.number, "unknown [outcome] key '" + l.key + "'");
          }
        } catch (const ConfigError&) {
          throw;
        } catch (const std::exception& e) {
          fail(origin, l.number, e.what());
        }
      }
      cfg.outcome = std::move(spec);
    } else if (sec.name == "impute") {
      ImputerSpec spec;
      bool family_set = false;
      for (const auto& l : sec.entries) {
        try {
          if (l.key == "target") spec.target = l.value;
          else if (l.key == "predictors") spec.predictors = split_list(l.value);
          else if (l.key == "family") {
            spec.family = parse_imputer_family(l.value);
            family_set = true;
          } else {
            fail(origin, l.number, "unknown [impute] key '" + l.key + "'");
          }
        } catch (const ConfigError&) {
          throw;
        } catch (const std::exception& e) {
          fail(origin, l.number, e.what());
        }
      }
      if (spec.target.empty()) fail(origin, sec.line, "[impute] needs a target");
      if (!family_set) {
        const ColumnSpec* col = nullptr;
        for (const auto& c : cfg.schema)
          if (c.name == spec.target) col = &c;
        if (!col)
          fail(origin, sec.line,
               "[impute] target '" + spec.target + "' is not a declared column");
        spec.family = default_imputer_family(col->role);
      }
      cfg.imputers.push_back(std::move(spec));
    } else if (sec.name == "mi") {
      if (seen_mi) fail(origin, sec.line, "duplicate [mi] section");
      seen_mi = true;
      for (const auto& l : sec.entries) {
        try {
          if (l.key == "m") cfg.imputations = int(parse_int(origin, l));
          else if (l.key == "cycles") cfg.cycles = int(parse_int(origin, l));
          else if (l.key == "stack") cfg.stack_mode = parse_stack_mode(l.value);
          else if (l.key == "weights") cfg.weight_mode = parse_weight_mode(l.value);
          else if (l.key == "output") {
            if (l.value != "stacked" && l.value != "separate")
              fail(origin, l.number, "output must be stacked or separate");
            cfg.impute_output = l.value;
          } else {
            fail(origin, l.number, "unknown [mi] key '" + l.key + "'");
          }
        } catch (const ConfigError&) {
          throw;
        } catch (const std::exception& e) {
          fail(origin, l.number, e.what());
        }
      }
      if (cfg.imputations < 2) fail(origin, sec.line, "m must be >= 2");
      if (cfg.cycles < 1) fail(origin, sec.line, "cycles must be >= 1");
    } else if (sec.name == "variance") {
      if (seen_variance) fail(origin, sec.line, "duplicate [variance] section");
      seen_variance = true;
      for (const auto& l : sec.entries) {
        if (l.key != "methods") fail(origin, l.number, "unknown [variance] key '" + l.key + "'");
        try {
          for (const auto& item : split_list(l.value))
            cfg.variances.push_back(parse_variance_method(item));
        } catch (const ConfigError&) {
          throw;
        } catch (const std::exception& e) {
          fail(origin, l.number, e.what());
        }
      }
    } else if (sec.name == "scenario") {
      ScenarioBlock block;
      for (const auto& l : sec.entries) {
        try {
          if (l.key == "id") block.id = int(parse_int(origin, l));
          else if (l.key == "n") block.n = Eigen::Index(parse_int(origin, l));
          else if (l.key == "reps" || l.key == "replications")
            block.replications = int(parse_int(origin, l));
          else if (l.key == "max_failures") block.max_failures = int(parse_int(origin, l));
          else if (l.key == "report_intercept") block.report_intercept = parse_bool(origin, l);
          else if (l.key == "phi") {
            auto items = split_list(l.value);
            if (items.size() != 3)
              fail(origin, l.number, "phi expects three numbers: phi0, phi1, phi2");
            block.phi.push_back({parse_double(origin, l, items[0]),
                                 parse_double(origin, l, items[1]),
                                 parse_double(origin, l, items[2])});
          } else if (l.key == "methods") {
            for (const auto& item : split_list(l.value)) block.methods.push_back(parse_method(item));
          } else {
            fail(origin, l.number, "unknown [scenario] key '" + l.key + "'");
          }
        } catch (const ConfigError&) {
          throw;
        } catch (const std::exception& e) {
          fail(origin, l.number, e.what());
        }
      }
      if (block.id < 1 || block.id > 4)
        fail(origin, sec.line, "[scenario] needs an id between 1 and 4");
      if (block.phi.empty()) block.phi.push_back({0.0, 0.0, 0.0});
      cfg.scenarios.push_back(std::move(block));
    } else {
      fail(origin, sec.line, "unknown section [" + sec.name + "]");
    }
  }

  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

}  // namespace stackmi
