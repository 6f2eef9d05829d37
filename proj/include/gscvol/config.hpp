#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gscvol/dataio.hpp"
#include "gscvol/diagnostics.hpp"
#include "gscvol/gsc.hpp"
#include "gscvol/svol.hpp"

namespace gscvol::cli {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kOutEnv = "GSCVOL_OUT";

/// Subcommands accepted by run_subcommand, in documentation order.
const std::vector<std::string>& subcommands();

/// Parameters for every subcommand. Serialized as a flat `key = value`
/// document; unset optionals are written as `auto` (or left empty).
struct RunConfig {
  std::string command;
  /// Optional suffix so alternative specifications can share an output
  /// directory: artifacts are named `<command>-<label>.*`.
  std::string label;
  std::string input;
  std::filesystem::path out_dir;
  /// Column mapping; covariates empty = every extra column, `none` = no covariates.
  PanelSchema schema;

  // gsc family
  std::optional<int> factors;  // nullopt = cross-validate
  int cv_min = 0;
  int cv_max = 5;
  double cv_min_improvement = 0.01;
  int bootstrap_reps = 1000;
  std::uint64_t seed = 1;
  gsc::CiScheme ci = gsc::CiScheme::Percentile;
  double ci_level = 0.95;
  double tol = 1e-7;
  int max_iter = 2000;
  int threads = 0;
  std::vector<std::string> units;  // per-unit runs; empty = every treated unit

  // diagnostics
  std::string placebo_start;  // empty = default shift before earliest adoption
  int placebo_shift = diagnostics::kDefaultPlaceboShift;
  std::vector<std::string> adoption_dates;  // empty = adoption months of the panel
  std::optional<double> true_att;           // empty = estimate from the panel
  std::optional<double> margin;             // empty = margin_factor * residual sd
  double margin_factor = diagnostics::kDefaultMarginFactor;

  // stochastic volatility
  std::string date_column = "date";
  std::string value_column = "return";
  std::string series = "returns";  // returns | prices
  int iterations = 20000;
  int burn_in = 1000;
  int particles = 10000;
  double offset_factor = 1e-4;
  svol::SvPriors priors;
  std::string vol_source = "filtered";  // filtered | smoothed

  bool operator==(const RunConfig&) const;

  /// Assigns one field from text; throws ConfigError naming the field.
  void set(const std::string& key, const std::string& value);
  std::vector<std::pair<std::string, std::string>> to_pairs() const;

  /// Checks the fields the command needs; throws ConfigError naming the field.
  void validate() const;

  gsc::GscConfig gsc_config() const;
  svol::SvConfig sv_config() const;
  /// True when the covariate list is the single keyword `none`.
  bool no_covariates() const;
  /// Artifact file stem: command with '-' replaced by '_', plus the label.
  std::string stem() const;
};

/// Known configuration keys in serialization order.
std::vector<std::string> config_keys();

RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const RunConfig& config);

/// GSCVOL_OUT when set, otherwise "gscvol_out".
std::filesystem::path default_out_dir();

}  // namespace gscvol::cli
