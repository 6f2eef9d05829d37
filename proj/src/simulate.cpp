#include "gscvol/simulate.hpp"

#include <cstdio>
#include <random>

#include "gscvol/error.hpp"

namespace gscvol::sim {

SimulatedPanel simulate_panel(const PanelSpec& spec, std::uint64_t seed) {
  const int n_tr = static_cast<int>(spec.treated_t0.size());
  const int n = spec.n_control + n_tr;
  const int t = spec.periods;
  const int r = spec.factors;
  const int p = static_cast<int>(spec.beta.size());
  if (spec.n_control < 1 || t < 2 || r < 0) throw ConfigError("invalid panel simulation spec");
  if (static_cast<int>(spec.covariate_names.size()) != p)
    throw ConfigError("covariate names must match beta length");
  for (int pre : spec.treated_t0)
    if (pre < 1 || pre >= t) throw ConfigError("treated t0 must lie in [1, T)");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> code(0, 2);
  std::uniform_int_distribution<int> when(0, t - 1);

  SimulatedPanel out;
  auto& truth = out.truth;
  truth.factors.resize(t, r);
  for (int k = 0; k < r; ++k) {
    double f = normal(rng);
    for (int s = 0; s < t; ++s) {
      truth.factors(s, k) = f;
      f = 0.5 * f + std::sqrt(0.75) * normal(rng);
    }
  }
  truth.loadings.resize(n, r);
  truth.alpha.resize(n);
  truth.xi.resize(t);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < r; ++k)
      truth.loadings(i, k) = normal(rng) + (i >= spec.n_control ? spec.treated_loading_shift : 0.0);
    truth.alpha(i) = normal(rng);
  }
  for (int s = 0; s < t; ++s) truth.xi(s) = normal(rng);

  const Eigen::MatrixXd common = truth.loadings * truth.factors.transpose();
  std::vector<Eigen::MatrixXd> x(p, Eigen::MatrixXd(n, t));
  for (int c = 0; c < p; ++c) {
    for (int i = 0; i < n; ++i) {
      if (c == spec.discrete_covariate) {
        const int before = code(rng);
        const int after = code(rng);
        const int change = when(rng);
        for (int s = 0; s < t; ++s) x[c](i, s) = s < change ? before : after;
      } else {
        for (int s = 0; s < t; ++s) x[c](i, s) = 1.0 + 0.3 * common(i, s) + normal(rng);
      }
    }
  }

  truth.systematic = truth.alpha.replicate(1, t);
  truth.systematic.rowwise() += truth.xi.transpose();
  truth.systematic += common;
  for (int c = 0; c < p; ++c) truth.systematic += spec.beta[c] * x[c];

  Eigen::MatrixXd y(n, t);
  Eigen::MatrixXi d = Eigen::MatrixXi::Zero(n, t);
  std::vector<std::string> units;
  for (int i = 0; i < n; ++i) {
    char name[16];
    if (i < spec.n_control) {
      std::snprintf(name, sizeof(name), "c%02d", i + 1);
    } else {
      std::snprintf(name, sizeof(name), "t%02d", i - spec.n_control + 1);
      d.row(i).tail(t - spec.treated_t0[i - spec.n_control]).setOnes();
    }
    units.emplace_back(name);
    for (int s = 0; s < t; ++s)
      y(i, s) = truth.systematic(i, s) + spec.effect * d(i, s) + spec.noise_sd * normal(rng);
  }
  std::vector<std::string> times;
  for (int s = 0; s < t; ++s) times.push_back(add_months(spec.start_month, s));

  out.panel = assemble_panel(std::move(units), std::move(times), std::move(y), std::move(d),
                             std::move(x), spec.covariate_names);
  return out;
}

}  // namespace gscvol::sim
