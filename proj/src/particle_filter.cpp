#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "gscvol/error.hpp"
#include "gscvol/svol.hpp"

namespace gscvol::svol {

namespace {

double log_obs_density(double y, double h) {
  return -0.5 * (std::log(2.0 * std::numbers::pi) + h + y * y * std::exp(-h));
}

// Normalizes log weights in place to probabilities; returns false when every
// weight is zero or non-finite.
bool normalize(std::vector<double>& logw, std::vector<double>& w) {
  const double top = *std::max_element(logw.begin(), logw.end());
  if (!std::isfinite(top)) return false;
  double total = 0.0;
  for (std::size_t i = 0; i < logw.size(); ++i) {
    w[i] = std::exp(logw[i] - top);
    total += w[i];
  }
  if (!(total > 0.0) || !std::isfinite(total)) return false;
  for (double& v : w) v /= total;
  return true;
}

double ess_of(const std::vector<double>& w) {
  double s = 0.0;
  for (double v : w) s += v * v;
  return s > 0.0 ? 1.0 / s : 0.0;
}

void stratified_resample(const std::vector<double>& w, std::vector<int>& ancestors,
                         std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const std::size_t n = w.size();
  double cumulative = w[0];
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = (static_cast<double>(i) + uniform(rng)) / static_cast<double>(n);
    while (u > cumulative && j + 1 < n) cumulative += w[++j];
    ancestors[i] = static_cast<int>(j);
  }
}

}  // namespace

FilterResult filter_volatility(const std::vector<double>& returns, const SvParams& params,
                               int n_particles, std::uint64_t seed) {
  params.check();
  if (n_particles < 100) throw ConfigError("n_particles must be at least 100");
  if (returns.empty()) throw DataError("filter_volatility needs at least one return");
  for (std::size_t t = 0; t < returns.size(); ++t)
    if (!std::isfinite(returns[t]))
      throw DataError("non-finite return at position " + std::to_string(t + 1));

  const std::size_t n = static_cast<std::size_t>(n_particles);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> particles(n), next(n), predicted(n), logw(n), w(n), stage(n), base(n);
  std::vector<int> ancestors(n);
  FilterResult result;
  result.h.resize(returns.size());
  result.ess.resize(returns.size());

  auto fail = [](std::size_t t) {
    throw NumericalError("particle degeneracy: all weights vanished at t=" + std::to_string(t + 1));
  };

  const double stationary_sd = params.sigma_eta / std::sqrt(1.0 - params.phi * params.phi);
  for (std::size_t i = 0; i < n; ++i) {
    particles[i] = params.mu + stationary_sd * normal(rng);
    logw[i] = log_obs_density(returns[0], particles[i]);
  }
  if (!normalize(logw, w)) fail(0);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += w[i] * particles[i];
  result.h[0] = mean;
  result.ess[0] = ess_of(w);

  const double half = static_cast<double>(n) / 2.0;
  for (std::size_t t = 1; t < returns.size(); ++t) {
    const double y = returns[t];
    // first stage: look ahead through the predictive mean of each particle
    for (std::size_t i = 0; i < n; ++i) {
      predicted[i] = params.mu + params.phi * (particles[i] - params.mu);
      stage[i] = std::log(w[i]) + log_obs_density(y, predicted[i]);
    }
    if (!normalize(stage, next)) fail(t);
    if (ess_of(next) < half) {
      stratified_resample(next, ancestors, rng);
      for (std::size_t i = 0; i < n; ++i)
        base[i] = -log_obs_density(y, predicted[ancestors[i]]);
      ++result.resample_count;
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        ancestors[i] = static_cast<int>(i);
        base[i] = std::log(w[i]);
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double h = predicted[ancestors[i]] + params.sigma_eta * normal(rng);
      next[i] = h;
      logw[i] = base[i] + log_obs_density(y, h);
    }
    particles.swap(next);
    if (!normalize(logw, w)) fail(t);
    mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += w[i] * particles[i];
    result.h[t] = mean;
    result.ess[t] = ess_of(w);
  }
  return result;
}

}  // namespace gscvol::svol
