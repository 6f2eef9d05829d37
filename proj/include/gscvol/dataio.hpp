#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gscvol {

/// Column-name mapping for long-format panel CSVs.
struct PanelSchema {
  std::string unit = "unit";
  std::string time = "time";
  std::string outcome = "outcome";
  std::string treatment = "treatment";
  /// Covariate columns in model order. Empty means every remaining column.
  std::vector<std::string> covariates;

  bool operator==(const PanelSchema&) const = default;
};

/// Balanced units x months panel. Units are stored controls first, treated
/// last; `t0[i]` is the number of untreated periods of unit i (T for controls).
struct PanelData {
  std::vector<std::string> units;
  std::vector<std::string> times;  // "YYYY-MM", ascending
  Eigen::MatrixXd y;               // N x T
  Eigen::MatrixXi d;               // N x T, 0/1
  std::vector<Eigen::MatrixXd> x;  // p matrices, each N x T
  std::vector<std::string> covariate_names;
  std::vector<int> t0;
  int n_control = 0;

  int n_units() const { return static_cast<int>(units.size()); }
  int n_periods() const { return static_cast<int>(times.size()); }
  int n_covariates() const { return static_cast<int>(x.size()); }
  int n_treated() const { return n_units() - n_control; }
  bool is_treated(int i) const { return i >= n_control; }

  std::optional<int> unit_index(const std::string& name) const;
  std::optional<int> time_index(const std::string& label) const;

  /// Checks shape and treatment invariants; throws DataError on violation.
  void check() const;
};

struct TreatmentIssue {
  int unit = 0;
  int time = 0;  // 0-based period index of the offending cell
  std::string message;
};

struct TreatmentReport {
  bool ok = true;
  std::vector<int> t0;  // per row; equals T for never-treated rows
  std::vector<TreatmentIssue> issues;
};

/// Each row must be non-decreasing and, if ever treated, start untreated.
TreatmentReport validate_treatment(const Eigen::MatrixXi& d);

PanelData load_panel(const std::filesystem::path& path, const PanelSchema& schema = {});
PanelData read_panel(std::istream& in, const PanelSchema& schema = {});

/// Writes the canonical long-format CSV (shortest round-trip number format).
void write_panel(std::ostream& out, const PanelData& panel);
void save_panel(const std::filesystem::path& path, const PanelData& panel);

/// Sub-panel keeping the listed covariates (by name), in the listed order.
PanelData select_covariates(const PanelData& panel, const std::vector<std::string>& names);

/// Rebuilds the panel from raw pieces: sorts controls-first, derives t0, checks.
PanelData assemble_panel(std::vector<std::string> units, std::vector<std::string> times,
                         Eigen::MatrixXd y, Eigen::MatrixXi d, std::vector<Eigen::MatrixXd> x,
                         std::vector<std::string> covariate_names);

/// Normalizes "YYYY-MM" or "YYYY-MM-DD" (also '/' separated) to "YYYY-MM".
std::optional<std::string> normalize_month(const std::string& text);
/// Month label `offset` months after `month` ("YYYY-MM").
std::string add_months(const std::string& month, int offset);

// Covariate construction ----------------------------------------------------

/// Percent per annum -> percent per month, geometric compounding.
double compound_to_monthly(double annual_rate_percent);

struct MonthlySeries {
  std::vector<std::string> months;
  std::vector<double> values;
};

enum class IrdSign { BaseMinusDomestic, DomesticMinusBase };

struct DifferentialSeries {
  MonthlySeries series;
  std::string convention;  // e.g. "base-domestic"
};

DifferentialSeries compute_ird(const MonthlySeries& base, const MonthlySeries& domestic,
                               IrdSign sign = IrdSign::BaseMinusDomestic);

DifferentialSeries compute_inflation_differential(const MonthlySeries& domestic,
                                                  const MonthlySeries& reference);

/// Panel-wide form: each unit row minus the common reference path.
Eigen::MatrixXd compute_inflation_differential(const Eigen::MatrixXd& domestic,
                                               const Eigen::RowVectorXd& reference);

/// Regime code: 0 other managed, 1 soft peg, 2 floating. Accepts the digits or names.
int regime_code(const std::string& label);

}  // namespace gscvol
