#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gscvol/dataio.hpp"
#include "gscvol/factor.hpp"

namespace gscvol::gsc {

enum class CiScheme { Percentile, Normal };

struct GscConfig {
  /// Fixed factor count; empty selects r by cross-validation over `cv`.
  std::optional<int> factors;
  factor::CvRange cv{0, 5};
  /// Covariate names to use; empty keeps every covariate in the panel.
  std::vector<std::string> covariates;
  /// Bootstrap replicates; 0 skips inference.
  int bootstrap_reps = 1000;
  std::uint64_t seed = 1;
  CiScheme ci = CiScheme::Percentile;
  double ci_level = 0.95;
  factor::IfeOptions ife;
  /// Worker threads for bootstrap replicates; 0 uses hardware concurrency.
  int threads = 0;
};

struct CoefficientInference {
  double se = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double p_value = 0.0;
};

/// Event-time ATT entry; event_time 0 is the first treated period.
struct AttPoint {
  int event_time = 0;
  double att = 0.0;
  int n_units = 0;
  double ci_lower = std::numeric_limits<double>::quiet_NaN();
  double ci_upper = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();
};

struct BootstrapSummary {
  double se = std::numeric_limits<double>::quiet_NaN();
  double ci_lower = std::numeric_limits<double>::quiet_NaN();
  double ci_upper = std::numeric_limits<double>::quiet_NaN();
  double p_value = std::numeric_limits<double>::quiet_NaN();
  std::vector<CoefficientInference> beta;
  std::vector<double> att_draws;  // bootstrap distribution of avg_att
  std::vector<double> path_lower, path_upper, path_se;  // aligned with att_path
  int replicates = 0;
  int dropped = 0;
};

struct AttResult {
  std::vector<std::string> treated_units;
  std::vector<int> t0;                   // per treated unit
  std::vector<AttPoint> att_path;
  Eigen::MatrixXd individual_effects;    // N_treat x T, Y - Y(0)
  Eigen::MatrixXd counterfactuals;       // N_treat x T, Y(0)
  double avg_att = 0.0;
  int post_cells = 0;
  double se = std::numeric_limits<double>::quiet_NaN();
  double ci_lower = std::numeric_limits<double>::quiet_NaN();
  double ci_upper = std::numeric_limits<double>::quiet_NaN();
  double p_value = std::numeric_limits<double>::quiet_NaN();
  std::vector<CoefficientInference> beta_inference;
  int bootstrap_reps = 0;
  int bootstrap_dropped = 0;
  std::uint64_t seed = 0;

  factor::FactorModel model;          // fitted on the control units
  Eigen::MatrixXd treated_loadings;   // N_treat x r
  Eigen::VectorXd treated_alpha;      // N_treat
  std::optional<factor::CvTable> cv;
  std::vector<std::string> covariate_names;
  /// Std-dev of outcomes net of two-way effects and covariates over untreated cells.
  double residual_sd = 0.0;
  double mspe = std::numeric_limits<double>::quiet_NaN();

  bool has_inference() const { return bootstrap_reps > 0; }
};

/// Treated-unit loadings and unit effects from each unit's pre-treatment
/// outcomes net of covariates and time effects.
struct TreatedFit {
  Eigen::MatrixXd loadings;  // N_treat x r
  Eigen::VectorXd alpha;     // N_treat
};

TreatedFit fit_treated(const PanelData& panel, const factor::FactorModel& model);

/// Y(0) = x'beta + lambda'f_t + alpha_i + xi_t for every treated unit and period.
Eigen::MatrixXd estimate_counterfactual(const PanelData& panel, const factor::FactorModel& model,
                                        const TreatedFit& treated);

/// Point estimates only (no bootstrap); r fixed.
AttResult estimate_att_fixed(const PanelData& panel, int r, const factor::IfeOptions& ife = {});

/// Full pipeline: factor selection, counterfactuals, ATT path, inference.
AttResult estimate_att(const PanelData& panel, const GscConfig& config = {});

/// Parametric bootstrap around a fitted result; throws ConfigError when reps < 200.
BootstrapSummary bootstrap_inference(const PanelData& panel, const AttResult& fitted, int reps,
                                     std::uint64_t seed, const GscConfig& config = {});

/// Restricts the treated set to one unit and re-runs estimate_att.
AttResult estimate_per_unit(const PanelData& panel, const std::string& unit,
                            const GscConfig& config = {});

/// Panel with the given treated units only (controls unchanged).
PanelData restrict_treated(const PanelData& panel, const std::vector<std::string>& keep);

/// Two-sided bootstrap p-value: 2 * min(share <= 0, share >= 0), clipped to [0, 1].
double two_sided_p(const std::vector<double>& draws);

/// Linear-interpolated empirical quantile of unsorted values.
double quantile(std::vector<double> values, double q);

}  // namespace gscvol::gsc
