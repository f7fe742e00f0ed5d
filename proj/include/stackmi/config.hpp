#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "stackmi/design.hpp"
#include "stackmi/errors.hpp"
#include "stackmi/imputer.hpp"
#include "stackmi/stack.hpp"
#include "stackmi/study.hpp"
#include "stackmi/table.hpp"
#include "stackmi/variance.hpp"

namespace stackmi {

// Raised on malformed configuration; carries the offending line when known.
class ConfigError : public InputError {
 public:
  explicit ConfigError(const std::string& what) : InputError(what) {}
};

struct ScenarioBlock {
  int id = 0;
  Eigen::Index n = 2000;
  int replications = 500;
  std::vector<std::array<double, 3>> phi;
  std::vector<Method> methods;  // empty: all
  int max_failures = 0;
  bool report_intercept = false;
};

// Parsed run configuration. The format is line-oriented `key = value` pairs
// grouped under repeatable `[section]` headers; see the README for the
// grammar.
struct RunConfig {
  std::optional<uint64_t> seed;
  int threads = 1;

  std::string data_path;
  std::string na_token = "NA";
  std::vector<ColumnSpec> schema;

  std::optional<OutcomeSpec> outcome;
  std::vector<ImputerSpec> imputers;

  int imputations = 50;
  int cycles = 10;
  StackMode stack_mode = StackMode::Tall;
  WeightMode weight_mode = WeightMode::Mle;
  std::string impute_output = "stacked";  // stacked | separate

  std::vector<VarianceMethod> variances;  // empty: louis

  std::vector<ScenarioBlock> scenarios;

  uint64_t require_seed() const;
  const OutcomeSpec& require_outcome() const;
  std::vector<VarianceMethod> effective_variances() const;
  std::vector<ImputerSpec> effective_imputers(const Table& table) const;
};

RunConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");
RunConfig parse_config_file(const std::string& path);

}  // namespace stackmi
