#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gscvol/gsc.hpp"

namespace gscvol::diagnostics {

/// Periods before the earliest adoption used by default for the in-time placebo.
inline constexpr int kDefaultPlaceboShift = 12;
/// Default equivalence margin as a multiple of the residualized outcome std-dev.
inline constexpr double kDefaultMarginFactor = 0.36;

/// Truncates the panel before the earliest real adoption and moves every
/// treated unit's start to `placebo_start` ("YYYY-MM").
PanelData in_time_placebo_panel(const PanelData& panel, const std::string& placebo_start);

/// Label `shift` periods before the earliest adoption.
std::string default_placebo_start(const PanelData& panel, int shift = kDefaultPlaceboShift);

gsc::AttResult in_time_placebo(const PanelData& panel, const std::string& placebo_start,
                               const gsc::GscConfig& config = {});

struct PlaceboEntry {
  std::string unit;
  std::string adoption;  // pseudo start month
  double placebo_att = 0.0;
  int selected_r = 0;
  bool applicable = true;  // false when cross-validation picks r = 0
  bool indicator = false;  // placebo_att >= true_att, applicable entries only
};

struct PlaceboReport {
  std::vector<PlaceboEntry> entries;  // ordered by (unit, adoption)
  std::vector<std::string> excluded;  // "unit@adoption" for r = 0 runs
  double true_att = 0.0;
  double empirical_p = std::numeric_limits<double>::quiet_NaN();
  bool p_defined = false;
  int applicable = 0;
  std::map<std::string, double> per_adoption_p;  // NaN when no applicable runs
};

/// Recomputes indicators, exclusions and p-values from the entries.
PlaceboReport summarize_placebo(std::vector<PlaceboEntry> entries, double true_att);

/// Assigns the policy to each control unit at each adoption date, with the
/// real treated units removed, and compares placebo ATTs with `true_att`.
PlaceboReport in_space_placebo(const PanelData& panel, double true_att,
                               const std::vector<std::string>& adoption_dates,
                               const gsc::GscConfig& config = {});

/// Adoption months of the treated units, in treated order.
std::vector<std::string> adoption_dates(const PanelData& panel);

struct EquivalencePoint {
  int event_time = 0;
  double att = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  bool pass = false;
};

struct EquivalenceResult {
  std::vector<EquivalencePoint> periods;  // pre-treatment event times only
  double margin = 0.0;
  bool overall = false;
  std::string verdict;
};

/// Per-period pass iff the CI lies inside [-margin, margin]. Default margin is
/// kDefaultMarginFactor times the residualized outcome std-dev.
EquivalenceResult equivalence_test(const gsc::AttResult& result,
                                   std::optional<double> margin = std::nullopt,
                                   double margin_factor = kDefaultMarginFactor);

struct FactorExport {
  Eigen::MatrixXd factors;   // T x r
  Eigen::MatrixXd loadings;  // N x r, controls then treated
  Eigen::VectorXd alpha;     // N
  std::vector<std::string> units;
  std::vector<bool> treated;
  std::vector<double> alpha_loading_correlation;  // per factor
  std::string notice;  // set when there is nothing to export
  bool empty() const { return factors.cols() == 0; }
};

FactorExport export_factors(const factor::FactorModel& model, const std::vector<std::string>& units,
                            const std::vector<bool>& treated);

/// Stacks control and treated loadings and unit effects from a GSC fit.
FactorExport export_factors(const gsc::AttResult& result, const PanelData& panel);

double pearson_correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

}  // namespace gscvol::diagnostics
