// stackmi: multiple imputation by stacking and weighting.
//
// Subcommands: simulate (built-in replication studies), impute (chained
// imputation of a csv), analyze (weighted estimation from stacked or separate
// imputed files). See README.md for the config format.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stackmi/commands.hpp"
#include "stackmi/config.hpp"
#include "stackmi/errors.hpp"

int main(int argc, char** argv) {
  CLI::App app{"stacked multiple imputation with analysis-model weights"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".";
  std::string impute_input;
  std::vector<std::string> analyze_inputs;

  CLI::App* simulate = app.add_subcommand("simulate", "run a seeded replication study");
  simulate->add_option("--config", config_path, "config file")->required();
  simulate->add_option("--out", out_dir, "output directory");

  CLI::App* impute = app.add_subcommand("impute", "multiply impute a dataset");
  impute->add_option("--config", config_path, "config file")->required();
  impute->add_option("--out", out_dir, "output directory");
  impute->add_option("data", impute_input, "input csv (defaults to [data] path)");

  CLI::App* analyze = app.add_subcommand("analyze", "fit the outcome model to imputations");
  analyze->add_option("--config", config_path, "config file")->required();
  analyze->add_option("--out", out_dir, "output directory");
  analyze->add_option("inputs", analyze_inputs, "stacked.csv or the imputed csv files");

  CLI11_PARSE(app, argc, argv);

  try {
    stackmi::RunConfig cfg = stackmi::parse_config_file(config_path);
    if (simulate->parsed()) return stackmi::cmd_simulate(cfg, out_dir, std::cout, std::cerr);
    if (impute->parsed())
      return stackmi::cmd_impute(cfg, impute_input, out_dir, std::cout, std::cerr);
    if (analyze->parsed())
      return stackmi::cmd_analyze(cfg, analyze_inputs, out_dir, std::cout, std::cerr);
  } catch (const stackmi::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
