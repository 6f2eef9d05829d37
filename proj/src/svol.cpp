#include "gscvol/svol.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "gscvol/dataio.hpp"
#include "gscvol/error.hpp"

namespace gscvol::svol {

// Kim, Shephard and Chib mixture for log(chi^2_1); means shifted by -1.2704.
const std::array<MixtureComponent, 7> kLogChiSquareMixture = {{
    {0.00730, -10.12999 - 1.2704, 5.79596},
    {0.10556, -3.97281 - 1.2704, 2.61369},
    {0.00002, -8.56686 - 1.2704, 5.17950},
    {0.04395, 2.77786 - 1.2704, 0.16735},
    {0.34001, 0.61942 - 1.2704, 0.64009},
    {0.24566, 1.79518 - 1.2704, 0.34023},
    {0.25750, -1.08819 - 1.2704, 1.26261},
}};

bool SvParams::valid() const {
  return std::isfinite(mu) && std::abs(phi) < 1.0 && sigma_eta > 0.0 && std::isfinite(sigma_eta);
}

void SvParams::check() const {
  if (!valid())
    throw ConfigError("invalid SV parameters: require |phi| < 1 and sigma_eta > 0");
}

void SvConfig::check() const {
  if (burn_in < 1) throw ConfigError("burn_in must be at least 1");
  if (iterations <= burn_in) throw ConfigError("iterations must exceed burn_in");
  if (!(offset_factor >= 0.0)) throw ConfigError("offset_factor must be non-negative");
  if (!(priors.mu_sd > 0.0) || !(priors.phi_a > 0.0) || !(priors.phi_b > 0.0) ||
      !(priors.sigma2_shape > 0.0) || !(priors.sigma2_scale > 0.0))
    throw ConfigError("SV prior hyperparameters must be positive");
}

std::vector<double> mean_correct(const std::vector<double>& log_returns) {
  if (log_returns.size() < 2) throw DataError("mean_correct needs at least two returns");
  const double mean =
      std::accumulate(log_returns.begin(), log_returns.end(), 0.0) / log_returns.size();
  std::vector<double> out(log_returns.size());
  std::transform(log_returns.begin(), log_returns.end(), out.begin(),
                 [mean](double v) { return v - mean; });
  return out;
}

std::vector<double> log_returns_from_prices(const std::vector<double>& prices) {
  if (prices.size() < 2) throw DataError("need at least two prices");
  std::vector<double> out;
  out.reserve(prices.size() - 1);
  for (std::size_t k = 0; k < prices.size(); ++k)
    if (!(prices[k] > 0.0) || !std::isfinite(prices[k]))
      throw DataError("non-positive or non-finite price at row " + std::to_string(k + 1));
  for (std::size_t k = 1; k < prices.size(); ++k)
    out.push_back(100.0 * std::log(prices[k] / prices[k - 1]));
  return out;
}

SimulatedSv simulate_sv(const SvParams& params, int length, std::uint64_t seed) {
  params.check();
  if (length < 1) throw ConfigError("simulation length must be at least 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  SimulatedSv sim;
  sim.h.resize(length);
  sim.returns.resize(length);
  const double sd0 = params.sigma_eta / std::sqrt(1.0 - params.phi * params.phi);
  double h = params.mu + sd0 * normal(rng);
  for (int t = 0; t < length; ++t) {
    sim.h[t] = h;
    sim.returns[t] = std::exp(h / 2.0) * normal(rng);
    h = params.mu + params.phi * (h - params.mu) + params.sigma_eta * normal(rng);
  }
  return sim;
}

std::vector<double> linearize_returns(const std::vector<double>& returns, double offset) {
  std::vector<double> out(returns.size());
  std::transform(returns.begin(), returns.end(), out.begin(),
                 [offset](double y) { return std::log(y * y + offset); });
  return out;
}

namespace {

struct Sampler {
  const std::vector<double>& ystar;
  const SvPriors& prior;
  std::mt19937_64 rng;
  std::normal_distribution<double> normal{0.0, 1.0};
  std::uniform_real_distribution<double> uniform{0.0, 1.0};

  std::vector<int> component;
  std::vector<double> h;
  // Kalman filter storage
  std::vector<double> filt_mean, filt_var, pred_mean, pred_var;

  double mu = 0.0, phi = 0.95, sigma2 = 0.04;
  long phi_accepted = 0;

  std::array<double, 7> log_norm{};
  std::array<double, 7> half_inv_var{};

  Sampler(const std::vector<double>& ys, const SvPriors& p, std::uint64_t seed)
      : ystar(ys), prior(p), rng(seed) {
    const std::size_t n = ys.size();
    component.assign(n, 0);
    filt_mean.resize(n);
    filt_var.resize(n);
    pred_mean.resize(n);
    pred_var.resize(n);
    for (std::size_t j = 0; j < 7; ++j) {
      const auto& c = kLogChiSquareMixture[j];
      log_norm[j] = std::log(c.weight) - 0.5 * std::log(c.variance);
      half_inv_var[j] = 0.5 / c.variance;
    }
    // start at the level implied by the linearized data
    const double start = std::accumulate(ys.begin(), ys.end(), 0.0) / n + 1.2704;
    mu = start;
    h.assign(n, start);
  }

  void draw_components() {
    std::array<double, 7> lp{};
    for (std::size_t t = 0; t < h.size(); ++t) {
      const double resid = ystar[t] - h[t];
      double best = -INFINITY;
      for (std::size_t j = 0; j < 7; ++j) {
        const double e = resid - kLogChiSquareMixture[j].mean;
        lp[j] = log_norm[j] - half_inv_var[j] * e * e;
        best = std::max(best, lp[j]);
      }
      double total = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        lp[j] = std::exp(lp[j] - best);
        total += lp[j];
      }
      double u = uniform(rng) * total;
      int pick = 6;
      for (int j = 0; j < 7; ++j) {
        u -= lp[j];
        if (u <= 0.0) {
          pick = j;
          break;
        }
      }
      component[t] = pick;
    }
  }

  // Forward filter, backward sample over the mixture-conditional Gaussian model.
  void draw_path() {
    const std::size_t n = h.size();
    double a = mu;
    double p = sigma2 / (1.0 - phi * phi);
    for (std::size_t t = 0; t < n; ++t) {
      const auto& c = kLogChiSquareMixture[component[t]];
      pred_mean[t] = a;
      pred_var[t] = p;
      const double gain = p / (p + c.variance);
      const double m = a + gain * (ystar[t] - c.mean - a);
      const double v = p * c.variance / (p + c.variance);
      filt_mean[t] = m;
      filt_var[t] = v;
      a = mu + phi * (m - mu);
      p = phi * phi * v + sigma2;
    }
    h[n - 1] = filt_mean[n - 1] + std::sqrt(filt_var[n - 1]) * normal(rng);
    for (std::size_t k = n - 1; k-- > 0;) {
      const double c = filt_var[k] * phi / pred_var[k + 1];
      const double mean = filt_mean[k] + c * (h[k + 1] - pred_mean[k + 1]);
      const double var = std::max(filt_var[k] - c * phi * filt_var[k], 0.0);
      h[k] = mean + std::sqrt(var) * normal(rng);
    }
  }

  void draw_mu() {
    const std::size_t n = h.size();
    double sum = 0.0;
    for (std::size_t t = 0; t + 1 < n; ++t) sum += h[t + 1] - phi * h[t];
    const double prior_prec = 1.0 / (prior.mu_sd * prior.mu_sd);
    const double prec = prior_prec + (1.0 - phi * phi) / sigma2 +
                        static_cast<double>(n - 1) * (1.0 - phi) * (1.0 - phi) / sigma2;
    const double weighted = prior.mu_mean * prior_prec + (1.0 - phi * phi) * h[0] / sigma2 +
                            (1.0 - phi) * sum / sigma2;
    mu = weighted / prec + normal(rng) / std::sqrt(prec);
  }

  double log_phi_target(double candidate) const {
    // Beta prior on (phi + 1) / 2 and stationary density of h_1; the AR
    // likelihood for t >= 2 is matched exactly by the proposal.
    const double x0 = h[0] - mu;
    return (prior.phi_a - 1.0) * std::log1p(candidate) + (prior.phi_b - 1.0) * std::log1p(-candidate) +
           0.5 * std::log(1.0 - candidate * candidate) -
           0.5 * (1.0 - candidate * candidate) * x0 * x0 / sigma2;
  }

  void draw_phi() {
    const std::size_t n = h.size();
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t t = 0; t + 1 < n; ++t) {
      const double x = h[t] - mu;
      sxx += x * x;
      sxy += x * (h[t + 1] - mu);
    }
    if (!(sxx > 0.0)) return;
    const double centre = sxy / sxx;
    const double sd = std::sqrt(sigma2 / sxx);
    const double candidate = centre + sd * normal(rng);
    const double u = uniform(rng);
    if (std::abs(candidate) >= 1.0) return;
    const double log_ratio = log_phi_target(candidate) - log_phi_target(phi);
    if (std::log(u) < log_ratio) {
      phi = candidate;
      ++phi_accepted;
    }
  }

  void draw_sigma2() {
    const std::size_t n = h.size();
    const double x0 = h[0] - mu;
    double ss = (1.0 - phi * phi) * x0 * x0;
    for (std::size_t t = 0; t + 1 < n; ++t) {
      const double e = (h[t + 1] - mu) - phi * (h[t] - mu);
      ss += e * e;
    }
    const double shape = prior.sigma2_shape + 0.5 * static_cast<double>(n);
    const double rate = prior.sigma2_scale + 0.5 * ss;
    std::gamma_distribution<double> gamma(shape, 1.0 / rate);
    sigma2 = 1.0 / gamma(rng);
  }
};

}  // namespace

SvPosterior estimate_sv(const std::vector<double>& returns, const SvConfig& config) {
  config.check();
  if (returns.size() < 2) throw DataError("estimate_sv needs at least two returns");
  for (std::size_t t = 0; t < returns.size(); ++t)
    if (!std::isfinite(returns[t]))
      throw DataError("non-finite return at position " + std::to_string(t + 1));

  const double n = static_cast<double>(returns.size());
  const double mean = std::accumulate(returns.begin(), returns.end(), 0.0) / n;
  double var = 0.0;
  for (double y : returns) var += (y - mean) * (y - mean);
  var /= (n - 1.0);
  double offset = config.offset_factor * var;
  if (!(offset > 0.0)) offset = config.offset_factor > 0.0 ? 1e-12 : 0.0;
  const auto ystar = linearize_returns(returns, offset);
  for (double v : ystar)
    if (!std::isfinite(v))
      throw DataError("log(y^2 + offset) is not finite; zero returns need a positive offset");

  Sampler sampler(ystar, config.priors, config.seed);
  SvPosterior post;
  const int kept = config.iterations - config.burn_in;
  post.draws.reserve(kept);
  post.h_smoothed.assign(returns.size(), 0.0);

  for (int it = 0; it < config.iterations; ++it) {
    sampler.draw_components();
    sampler.draw_path();
    sampler.draw_mu();
    sampler.draw_phi();
    sampler.draw_sigma2();
    if (it >= config.burn_in) {
      post.draws.push_back({sampler.mu, sampler.phi, std::sqrt(sampler.sigma2)});
      for (std::size_t t = 0; t < sampler.h.size(); ++t) post.h_smoothed[t] += sampler.h[t];
    }
  }
  for (double& v : post.h_smoothed) v /= kept;

  std::vector<double> mus, phis, sigmas;
  mus.reserve(kept);
  phis.reserve(kept);
  sigmas.reserve(kept);
  for (const auto& d : post.draws) {
    mus.push_back(d.mu);
    phis.push_back(d.phi);
    sigmas.push_back(d.sigma_eta);
  }
  auto avg = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  post.posterior_mean = {avg(mus), avg(phis), avg(sigmas)};
  post.diagnostics.ess_mu = effective_sample_size(mus);
  post.diagnostics.ess_phi = effective_sample_size(phis);
  post.diagnostics.ess_sigma_eta = effective_sample_size(sigmas);
  post.diagnostics.phi_acceptance =
      static_cast<double>(sampler.phi_accepted) / static_cast<double>(config.iterations);
  return post;
}

Interval credible_interval(const SvPosterior& post, SvParameter which, double level) {
  if (post.draws.empty()) throw DataError("posterior has no draws");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("credible level must lie in (0, 1)");
  std::vector<double> v;
  v.reserve(post.draws.size());
  for (const auto& d : post.draws) {
    switch (which) {
      case SvParameter::Mu: v.push_back(d.mu); break;
      case SvParameter::Phi: v.push_back(d.phi); break;
      case SvParameter::SigmaEta: v.push_back(d.sigma_eta); break;
    }
  }
  std::sort(v.begin(), v.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  const double tail = (1.0 - level) / 2.0;
  return {quantile(tail), quantile(1.0 - tail)};
}

double effective_sample_size(const std::vector<double>& chain) {
  const std::size_t n = chain.size();
  if (n < 4) return static_cast<double>(n);
  const double mean = std::accumulate(chain.begin(), chain.end(), 0.0) / static_cast<double>(n);
  double c0 = 0.0;
  for (double v : chain) c0 += (v - mean) * (v - mean);
  c0 /= static_cast<double>(n);
  if (!(c0 > 0.0)) return static_cast<double>(n);
  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t t = 0; t + lag < n; ++t) s += (chain[t] - mean) * (chain[t + lag] - mean);
    return s / static_cast<double>(n);
  };
  // Geyer: sum consecutive pairs while they stay positive.
  double tau = -1.0;
  for (std::size_t lag = 0; lag + 1 < n; lag += 2) {
    const double pair = (autocov(lag) + autocov(lag + 1)) / c0;
    if (pair <= 0.0) break;
    tau += 2.0 * pair;
  }
  tau = std::max(tau, 1.0 / static_cast<double>(n));
  return static_cast<double>(n) / tau;
}

std::vector<MonthlyVolatility> aggregate_monthly_sigma(const std::vector<std::string>& dates,
                                                       const std::vector<double>& daily_sigma) {
  if (dates.size() != daily_sigma.size())
    throw DataError("dates and daily values differ in length");
  if (dates.empty()) throw DataError("aggregation error: no daily observations");
  std::map<std::string, std::vector<double>> groups;
  for (std::size_t k = 0; k < dates.size(); ++k) {
    auto month = normalize_month(dates[k]);
    if (!month) throw DataError("cannot parse date '" + dates[k] + "' at row " + std::to_string(k + 1));
    const double s = daily_sigma[k];
    if (!std::isfinite(s) || s < 0.0)
      throw DataError("invalid daily volatility at row " + std::to_string(k + 1));
    groups[*month].push_back(s);
  }
  std::vector<MonthlyVolatility> out;
  std::string expected = groups.begin()->first;
  for (auto& [month, values] : groups) {
    if (month != expected) throw DataError("aggregation error: empty month " + expected);
    expected = add_months(month, 1);
    // sorted so the result does not depend on day order
    std::sort(values.begin(), values.end());
    const double top = values.back();
    double vol = 0.0;
    if (top > 0.0) {
      double sum = 0.0;
      for (double v : values) sum += (v / top) * (v / top);
      vol = top * std::sqrt(sum / static_cast<double>(values.size()));
    }
    out.push_back({month, vol, static_cast<int>(values.size())});
  }
  return out;
}

std::vector<MonthlyVolatility> aggregate_monthly(const std::vector<std::string>& dates,
                                                 const std::vector<double>& daily_h) {
  std::vector<double> sigma(daily_h.size());
  std::transform(daily_h.begin(), daily_h.end(), sigma.begin(),
                 [](double h) { return std::exp(h / 2.0); });
  return aggregate_monthly_sigma(dates, sigma);
}

}  // namespace gscvol::svol
