#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gscvol/artifacts.hpp"
#include "gscvol/commands.hpp"
#include "gscvol/config.hpp"
#include "gscvol/error.hpp"
#include "gscvol/text.hpp"

namespace {

using gscvol::cli::RunConfig;

// "unit=country,time=month,outcome=vol,treatment=policy"
void apply_schema(RunConfig& config, const std::string& mapping) {
  for (const auto& item : gscvol::split_csv_line(mapping)) {
    const auto eq = item.find('=');
    if (eq == std::string::npos)
      throw gscvol::ConfigError("'schema' entries must look like role=column, got '" + item + "'");
    const std::string role = gscvol::trim(item.substr(0, eq));
    const std::string column = gscvol::trim(item.substr(eq + 1));
    if (role != "unit" && role != "time" && role != "outcome" && role != "treatment")
      throw gscvol::ConfigError("'schema' role must be unit, time, outcome or treatment, got '" +
                                role + "'");
    config.set(role + "_column", column);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic volatility and generalized synthetic control pipeline"};
  app.set_version_flag("--version", std::string(gscvol::cli::kVersion));

  std::string command;
  std::string config_file;
  std::string manifest_file;
  std::string schema;
  std::vector<std::string> settings;
  bool print_config = false;

  std::string subcommand_list;
  for (const auto& name : gscvol::cli::subcommands()) subcommand_list += " " + name;
  app.add_option("command", command, "Subcommand:" + subcommand_list);
  app.add_option("--config", config_file, "Flat key = value run configuration");
  app.add_option("--manifest", manifest_file, "Re-run the configuration recorded in a manifest");
  app.add_option("--schema", schema, "Column mapping, e.g. unit=country,time=month");
  app.add_option("--set", settings, "Override any configuration key: key=value (repeatable)");
  app.add_flag("--print-config", print_config, "Print the effective configuration and exit");

  // Flag name -> configuration key. Flags override the config file and manifest.
  const std::vector<std::pair<std::string, std::string>> flag_keys = {
      {"--input", "input"},
      {"--out", "out"},
      {"--label", "label"},
      {"--factors", "factors"},
      {"--cv-min", "cv_min"},
      {"--cv-max", "cv_max"},
      {"--cv-min-improvement", "cv_min_improvement"},
      {"--bootstrap-reps", "bootstrap_reps"},
      {"--seed", "seed"},
      {"--ci", "ci"},
      {"--ci-level", "ci_level"},
      {"--tol", "tol"},
      {"--max-iter", "max_iter"},
      {"--threads", "threads"},
      {"--covariates", "covariates"},
      {"--units", "units"},
      {"--placebo-start", "placebo_start"},
      {"--placebo-shift", "placebo_shift"},
      {"--adoption-dates", "adoption_dates"},
      {"--true-att", "true_att"},
      {"--margin", "margin"},
      {"--margin-factor", "margin_factor"},
      {"--date-column", "date_column"},
      {"--value-column", "value_column"},
      {"--series", "series"},
      {"--iterations", "iterations"},
      {"--burn-in", "burn_in"},
      {"--particles", "particles"},
      {"--offset-factor", "offset_factor"},
      {"--vol-source", "vol_source"},
  };
  std::vector<std::optional<std::string>> flag_values(flag_keys.size());
  for (std::size_t k = 0; k < flag_keys.size(); ++k)
    app.add_option(flag_keys[k].first, flag_values[k], "Sets '" + flag_keys[k].second + "'");
  app.footer("Default output directory: $" + std::string(gscvol::cli::kOutEnv) +
             " or ./gscvol_out. Exit codes: 0 success, 1 usage, 2 data error, 3 numerical "
             "failure.");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : gscvol::cli::kUsage;
  }

  RunConfig config;
  try {
    if (!config_file.empty() && !manifest_file.empty())
      throw gscvol::ConfigError("use either --config or --manifest, not both");
    if (!manifest_file.empty()) {
      config = gscvol::cli::config_from_manifest(manifest_file);
    } else if (!config_file.empty()) {
      config = gscvol::cli::load_config(config_file);
    } else {
      config.out_dir = gscvol::cli::default_out_dir();
    }
    if (!command.empty()) config.command = command;
    for (const auto& s : settings) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw gscvol::ConfigError("--set expects key=value, got '" + s + "'");
      config.set(gscvol::trim(s.substr(0, eq)), s.substr(eq + 1));
    }
    if (!schema.empty()) apply_schema(config, schema);
    for (std::size_t k = 0; k < flag_keys.size(); ++k)
      if (flag_values[k]) config.set(flag_keys[k].second, *flag_values[k]);
    if (config.command.empty())
      throw gscvol::ConfigError("missing subcommand; expected one of:" + subcommand_list);
  } catch (...) {
    return gscvol::cli::exit_code_for_current_exception(std::cerr);
  }

  if (print_config) {
    std::cout << gscvol::cli::serialize_config(config);
    return 0;
  }
  try {
    const auto outcome = gscvol::cli::execute(config);
    for (const auto& name : outcome.artifacts) std::cout << (config.out_dir / name).string() << "\n";
    std::cout << outcome.manifest.string() << "\n";
    return gscvol::cli::kOk;
  } catch (...) {
    return gscvol::cli::exit_code_for_current_exception(std::cerr);
  }
}
