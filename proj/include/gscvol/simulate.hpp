#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gscvol/dataio.hpp"

namespace gscvol::sim {

/// Synthetic interactive-fixed-effects panel:
///   y_it = alpha_i + xi_t + x_it' beta + lambda_i' f_t + effect * d_it + e_it
struct PanelSpec {
  int n_control = 24;
  std::vector<int> treated_t0 = {121, 70, 126};
  int periods = 166;
  int factors = 2;
  std::vector<double> beta = {1.0, 0.5, -0.5};
  std::vector<std::string> covariate_names = {"ird", "regime", "infl_diff"};
  /// Covariate index drawn as a piecewise-constant code in {0, 1, 2}; -1 for none.
  int discrete_covariate = 1;
  double noise_sd = 0.3;
  double effect = 0.0;
  /// Shift of the treated units' loadings, so treatment correlates with the factors.
  double treated_loading_shift = 0.5;
  std::string start_month = "2008-03";
};

struct PanelTruth {
  Eigen::MatrixXd factors;   // T x r
  Eigen::MatrixXd loadings;  // N x r (panel order)
  Eigen::VectorXd alpha;
  Eigen::VectorXd xi;
  Eigen::MatrixXd systematic;  // N x T without effect and noise
};

struct SimulatedPanel {
  PanelData panel;
  PanelTruth truth;
};

SimulatedPanel simulate_panel(const PanelSpec& spec, std::uint64_t seed);

}  // namespace gscvol::sim
