#pragma once

#include <string>
#include <vector>

#include "stackmi/config.hpp"

namespace stackmi {

// CLI entry points. Each returns the process exit code: 0 on success, 1 on
// configuration or input errors, 2 when a simulation exceeds its failure
// threshold. Printing goes to the provided streams so tests can capture it.

int cmd_simulate(const RunConfig& cfg, const std::string& out_dir, std::ostream& out,
                 std::ostream& err);
int cmd_impute(const RunConfig& cfg, const std::string& data_csv, const std::string& out_dir,
               std::ostream& out, std::ostream& err);
int cmd_analyze(const RunConfig& cfg, const std::vector<std::string>& inputs,
                const std::string& out_dir, std::ostream& out, std::ostream& err);

}  // namespace stackmi
