#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gscvol {
struct PanelData;
}

namespace gscvol::factor {

/// Outcome and covariates for the units used in estimation (rows are units).
struct PanelBlock {
  Eigen::MatrixXd y;               // N x T
  std::vector<Eigen::MatrixXd> x;  // p matrices, each N x T
  std::vector<std::string> covariate_names;

  int n_units() const { return static_cast<int>(y.rows()); }
  int n_periods() const { return static_cast<int>(y.cols()); }
  int n_covariates() const { return static_cast<int>(x.size()); }
};

/// Interactive fixed effects fit:
///   y_it = alpha_i + xi_t + x_it' beta + lambda_i' f_t + e_it
/// alpha carries the grand mean; xi sums to zero over t. F'F/T = I and
/// Lambda'Lambda is diagonal.
struct FactorModel {
  Eigen::VectorXd beta;
  Eigen::MatrixXd factors;   // T x r
  Eigen::MatrixXd loadings;  // N x r
  Eigen::VectorXd alpha;     // N
  Eigen::VectorXd xi;        // T
  int r = 0;
  double sigma2 = 0.0;
  double ic = 0.0;
  Eigen::MatrixXd residuals;  // N x T
  std::vector<bool> dropped_covariates;
  int iterations = 0;
  std::vector<double> objective_trace;  // residual sum of squares per iteration

  /// alpha_i + xi_t + x_it' beta + lambda_i' f_t for the estimation units.
  Eigen::MatrixXd fitted(const PanelBlock& block) const;
};

struct IfeOptions {
  double tol = 1e-7;
  int max_iter = 2000;
  /// Optional T x r starting factors; default warm start is the two-way residual PCA.
  std::optional<Eigen::MatrixXd> initial_factors;
};

PanelBlock control_block(const PanelData& panel);

/// Removes unit and time means (adds back the grand mean).
Eigen::MatrixXd twoway_demean(const Eigen::MatrixXd& m);

/// Additive two-way fixed effects with covariates (r = 0).
FactorModel fit_twoway(const PanelBlock& block);

/// Alternating least squares for beta and the leading-r principal components.
FactorModel fit_ife(const PanelBlock& block, int r, const IfeOptions& options = {});

struct LeadingFactors {
  Eigen::MatrixXd factors;   // T x r, F'F/T = I
  Eigen::MatrixXd loadings;  // N x r
  Eigen::VectorXd singular_values;
};

/// Leading-r principal components of an N x T matrix.
LeadingFactors leading_factors(const Eigen::MatrixXd& e, int r);

/// Least-squares coefficients of each column of `targets` on `design`.
/// Throws SingularityError when design'design is singular.
Eigen::MatrixXd project_loadings(const Eigen::MatrixXd& design, const Eigen::MatrixXd& targets);

/// Largest principal angle (radians) between two column spaces.
double max_principal_angle(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

struct CvRow {
  int r = 0;
  double sigma2 = 0.0;
  double ic = 0.0;
  double pc = 0.0;
  double mspe = 0.0;
};

struct CvTable {
  std::vector<CvRow> rows;
  int selected_r = 0;
  bool tie_broken = false;
  std::vector<std::string> notices;
};

struct CvRange {
  int min = 0;
  int max = 5;
  /// Relative MSPE gain a larger r needs over the best smaller one; 0 selects
  /// the plain argmin with ties going to the smaller r.
  double min_improvement = 0.01;
};

/// Sets selected_r and tie_broken from the MSPE column of `table.rows`.
void select_factor_count(CvTable& table, double min_improvement);

/// Leave-one-period-out prediction error over the treated units' pre-treatment
/// periods for every feasible r in the range.
CvTable cross_validate(const PanelData& panel, CvRange range, const IfeOptions& options = {});

/// Largest r that fit_ife accepts for an N x T estimation block.
int max_feasible_factors(int n_units, int n_periods);

}  // namespace gscvol::factor
