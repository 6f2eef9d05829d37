#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace gscvol::svol {

/// AR(1) log-volatility parameters. The observation scale is fixed at one.
struct SvParams {
  double mu = 0.0;
  double phi = 0.0;
  double sigma_eta = 1.0;

  bool valid() const;
  /// Throws ConfigError when |phi| >= 1 or sigma_eta <= 0.
  void check() const;
};

/// Seven-component normal mixture approximating log(chi^2_1). The component
/// means already include the -1.2704 centring constant.
struct MixtureComponent {
  double weight;
  double mean;
  double variance;
};
extern const std::array<MixtureComponent, 7> kLogChiSquareMixture;

struct SvPriors {
  double mu_mean = 0.0;
  double mu_sd = 10.0;
  double phi_a = 20.0;  // (phi + 1) / 2 ~ Beta(a, b)
  double phi_b = 1.5;
  double sigma2_shape = 2.5;  // sigma_eta^2 ~ InvGamma(shape, scale)
  double sigma2_scale = 0.025;
};

struct SvConfig {
  int iterations = 20000;
  int burn_in = 1000;
  SvPriors priors;
  std::uint64_t seed = 1;
  /// Offset c = offset_factor * var(y) inside log(y^2 + c).
  double offset_factor = 1e-4;

  void check() const;
};

struct ChainDiagnostics {
  double ess_mu = 0.0;
  double ess_phi = 0.0;
  double ess_sigma_eta = 0.0;
  double phi_acceptance = 0.0;
};

struct SvPosterior {
  std::vector<SvParams> draws;  // post burn-in
  SvParams posterior_mean;
  std::vector<double> h_filtered;  // filled by filter_volatility callers
  std::vector<double> h_smoothed;  // posterior mean of h_t over retained draws
  ChainDiagnostics diagnostics;
};

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  bool contains(double v) const { return lower <= v && v <= upper; }
};

enum class SvParameter { Mu, Phi, SigmaEta };

/// Equal-tailed credible interval from the stored draws.
Interval credible_interval(const SvPosterior& post, SvParameter which, double level);

/// Subtracts the sample mean. Throws DataError for fewer than two points.
std::vector<double> mean_correct(const std::vector<double>& log_returns);

/// 100 * log(p_t / p_{t-1}). Throws DataError on non-positive prices.
std::vector<double> log_returns_from_prices(const std::vector<double>& prices);

struct SimulatedSv {
  std::vector<double> returns;
  std::vector<double> h;
};

SimulatedSv simulate_sv(const SvParams& params, int length, std::uint64_t seed);

/// log(y^2 + offset); the linearized observation used by the sampler.
std::vector<double> linearize_returns(const std::vector<double>& returns, double offset);

/// Auxiliary-mixture Gibbs sampler (mixture indicators, FFBS path draw,
/// parameter conditionals).
SvPosterior estimate_sv(const std::vector<double>& returns, const SvConfig& config = {});

struct FilterResult {
  std::vector<double> h;    // E[h_t | y_1..y_t]
  std::vector<double> ess;  // effective sample size after weighting at t
  int resample_count = 0;
};

/// Auxiliary particle filter with stratified resampling when ESS < n/2.
FilterResult filter_volatility(const std::vector<double>& returns, const SvParams& params,
                               int n_particles = 10000, std::uint64_t seed = 1);

struct MonthlyVolatility {
  std::string month;  // "YYYY-MM"
  double volatility = 0.0;
  int days = 0;
};

/// Root-mean-square of daily sigma_d = exp(h_d / 2) within each month.
/// Dates are "YYYY-MM-DD" (or "YYYY-MM"); output ordered by month.
std::vector<MonthlyVolatility> aggregate_monthly(const std::vector<std::string>& dates,
                                                 const std::vector<double>& daily_h);

/// Same aggregation from daily sigma values directly.
std::vector<MonthlyVolatility> aggregate_monthly_sigma(const std::vector<std::string>& dates,
                                                       const std::vector<double>& daily_sigma);

/// Effective sample size from the initial positive sequence of autocorrelations.
double effective_sample_size(const std::vector<double>& chain);

}  // namespace gscvol::svol
