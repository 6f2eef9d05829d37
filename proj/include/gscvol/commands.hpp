#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "gscvol/config.hpp"
#include "gscvol/diagnostics.hpp"
#include "gscvol/gsc.hpp"

namespace gscvol::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kNumericalError = 3 };

struct RunOutcome {
  std::vector<std::string> artifacts;  // file names inside the output directory
  std::filesystem::path manifest;
};

/// Runs a validated configuration and writes its artifacts and manifest.
/// Throws the library error types.
RunOutcome execute(const RunConfig& config);

/// Sets the command, runs it and maps errors to exit codes, reporting them on `err`.
int run_subcommand(const std::string& name, RunConfig config, std::ostream& err);

/// Exit code for the exception currently being handled.
int exit_code_for_current_exception(std::ostream& err);

nlohmann::ordered_json att_to_json(const gsc::AttResult& result, const PanelData& panel,
                                   const gsc::GscConfig& config);
nlohmann::ordered_json cv_to_json(const factor::CvTable& table);
nlohmann::ordered_json placebo_to_json(const diagnostics::PlaceboReport& report);
nlohmann::ordered_json equivalence_to_json(const diagnostics::EquivalenceResult& result);

/// Markdown summary of the JSON artifacts found in `dir`.
std::string render_report(const std::filesystem::path& dir);

}  // namespace gscvol::cli
