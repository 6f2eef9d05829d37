#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "gscvol/error.hpp"
#include "gscvol/svol.hpp"

using namespace gscvol;
using namespace gscvol::svol;

namespace {

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double rmse(const std::vector<double>& a, const std::vector<double>& b, std::size_t from = 0) {
  double ss = 0.0;
  for (std::size_t t = from; t < a.size(); ++t) ss += (a[t] - b[t]) * (a[t] - b[t]);
  return std::sqrt(ss / static_cast<double>(a.size() - from));
}

std::vector<std::string> days_of(const std::string& month, int n) {
  std::vector<std::string> out;
  for (int d = 1; d <= n; ++d) out.push_back(month + (d < 10 ? "-0" : "-") + std::to_string(d));
  return out;
}

const SvParams kTruth{-1.0, 0.95, 0.2};

}  // namespace

TEST(Mixture, WeightsSumToOne) {
  double total = 0.0;
  for (const auto& c : kLogChiSquareMixture) {
    EXPECT_GT(c.weight, 0.0);
    EXPECT_GT(c.variance, 0.0);
    total += c.weight;
  }
  EXPECT_NEAR(total, 1.0, 1e-4);
}

TEST(Mixture, MatchesLogChiSquareMoments) {
  // E[log chi^2_1] = -1.2704, Var = pi^2 / 2.
  double m = 0.0, second = 0.0;
  for (const auto& c : kLogChiSquareMixture) {
    m += c.weight * c.mean;
    second += c.weight * (c.variance + c.mean * c.mean);
  }
  EXPECT_NEAR(m, -1.2704, 2e-3);
  EXPECT_NEAR(second - m * m, M_PI * M_PI / 2.0, 2e-2);
}

TEST(MeanCorrect, Examples) {
  EXPECT_EQ(mean_correct({1, 1, 1}), (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(mean_correct({1, -1}), (std::vector<double>{1, -1}));
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.3, 2.0);
  std::vector<double> x(257);
  for (double& v : x) v = n(rng);
  const double m = mean(x);
  const auto out = mean_correct(x);
  ASSERT_EQ(out.size(), x.size());
  for (std::size_t k = 0; k < x.size(); ++k) EXPECT_DOUBLE_EQ(out[k], x[k] - m);
  double scale = 0.0;
  for (double v : x) scale = std::max(scale, std::abs(v));
  EXPECT_LE(std::abs(mean(out)), 1e-14 * scale);
  EXPECT_THROW(mean_correct({1.0}), DataError);
}

TEST(LogReturns, PercentLogDifferences) {
  const auto r = log_returns_from_prices({100.0, 110.0, 99.0});
  ASSERT_EQ(r.size(), 2u);
  EXPECT_NEAR(r[0], 100.0 * std::log(1.1), 1e-12);
  EXPECT_NEAR(r[1], 100.0 * std::log(0.9), 1e-12);
  EXPECT_THROW(log_returns_from_prices({1.0, 0.0}), DataError);
}

TEST(SimulateSv, DegenerateVolOfVol) {
  const auto s = simulate_sv({-1.0, 0.9, 1e-8}, 4000, 3);
  for (double h : s.h) EXPECT_NEAR(h, -1.0, 1e-6);
  double ss = 0.0;
  for (double y : s.returns) ss += y * y;
  const double var = ss / s.returns.size();
  // Var of the sample variance of N(0, e^-1) draws is 2 e^-2 / T.
  EXPECT_NEAR(var, std::exp(-1.0), 4.0 * std::sqrt(2.0 / 4000) * std::exp(-1.0));
}

TEST(SimulateSv, StationaryVarianceOfH) {
  const int t = 3000;
  const auto s = simulate_sv(kTruth, t, 17);
  const double m = mean(s.h);
  double ss = 0.0;
  for (double h : s.h) ss += (h - m) * (h - m);
  const double sample = ss / (t - 1);
  const double target = 0.04 / (1.0 - 0.95 * 0.95);
  // Large-sample sd of the sample variance for a Gaussian AR(1).
  const double phi2 = 0.95 * 0.95;
  const double mc_se = target * std::sqrt(2.0 * (1.0 + phi2) / (1.0 - phi2) / t);
  EXPECT_NEAR(sample, target, 3.0 * mc_se);
}

TEST(SimulateSv, Deterministic) {
  const auto a = simulate_sv(kTruth, 500, 9);
  const auto b = simulate_sv(kTruth, 500, 9);
  EXPECT_EQ(a.returns, b.returns);
  EXPECT_EQ(a.h, b.h);
  EXPECT_NE(a.returns, simulate_sv(kTruth, 500, 10).returns);
  EXPECT_THROW(simulate_sv({0.0, 1.0, 0.2}, 10, 1), ConfigError);
  EXPECT_THROW(simulate_sv({0.0, 0.5, 0.0}, 10, 1), ConfigError);
}

TEST(Linearize, MatchesTwoLogAbs) {
  const std::vector<double> y = {0.5, -2.0, 1e-3, 7.25, -0.01};
  const auto z = linearize_returns(y, 0.0);
  for (std::size_t k = 0; k < y.size(); ++k) EXPECT_NEAR(z[k], 2.0 * std::log(std::abs(y[k])), 1e-12);
}

TEST(EstimateSv, StoresIterationsMinusBurnIn) {
  const auto s = simulate_sv(kTruth, 300, 2);
  SvConfig cfg;
  cfg.iterations = 1500;
  cfg.burn_in = 500;
  const auto post = estimate_sv(mean_correct(s.returns), cfg);
  EXPECT_EQ(post.draws.size(), 1000u);
  for (const auto& d : post.draws) {
    EXPECT_LT(std::abs(d.phi), 1.0);
    EXPECT_GT(d.sigma_eta, 0.0);
  }
  EXPECT_EQ(post.h_smoothed.size(), 300u);
  EXPECT_GT(post.diagnostics.ess_mu, 0.0);
  EXPECT_GT(post.diagnostics.phi_acceptance, 0.0);
}

TEST(EstimateSv, DefaultConfigKeepsNineteenThousandDraws) {
  const SvConfig cfg;
  EXPECT_EQ(cfg.iterations, 20000);
  EXPECT_EQ(cfg.burn_in, 1000);
  const auto s = simulate_sv(kTruth, 50, 4);
  const auto post = estimate_sv(mean_correct(s.returns), cfg);
  EXPECT_EQ(post.draws.size(), 19000u);
}

TEST(EstimateSv, RejectsBadConfigAndInput) {
  SvConfig cfg;
  cfg.iterations = 100;
  cfg.burn_in = 100;
  EXPECT_THROW(estimate_sv({0.1, -0.1, 0.2}, cfg), ConfigError);
  cfg.burn_in = 150;
  EXPECT_THROW(estimate_sv({0.1, -0.1, 0.2}, cfg), ConfigError);
  cfg.burn_in = 10;
  EXPECT_THROW(estimate_sv({0.1, NAN, 0.2}, cfg), DataError);
}

TEST(EstimateSv, ZeroReturnsAreHandledByOffset) {
  auto s = simulate_sv(kTruth, 400, 8);
  for (std::size_t k = 0; k < s.returns.size(); k += 25) s.returns[k] = 0.0;
  SvConfig cfg;
  cfg.iterations = 600;
  cfg.burn_in = 100;
  const auto post = estimate_sv(s.returns, cfg);
  for (double h : post.h_smoothed) EXPECT_TRUE(std::isfinite(h));
}

TEST(EstimateSv, BitIdenticalForSameSeed) {
  const auto s = simulate_sv(kTruth, 300, 12);
  SvConfig cfg;
  cfg.iterations = 800;
  cfg.burn_in = 100;
  cfg.seed = 77;
  const auto a = estimate_sv(mean_correct(s.returns), cfg);
  const auto b = estimate_sv(mean_correct(s.returns), cfg);
  ASSERT_EQ(a.draws.size(), b.draws.size());
  for (std::size_t k = 0; k < a.draws.size(); ++k) {
    EXPECT_EQ(a.draws[k].mu, b.draws[k].mu);
    EXPECT_EQ(a.draws[k].phi, b.draws[k].phi);
    EXPECT_EQ(a.draws[k].sigma_eta, b.draws[k].sigma_eta);
  }
  EXPECT_EQ(a.h_smoothed, b.h_smoothed);
}

TEST(EstimateSv, RecoversParametersOnOneSeries) {
  const auto s = simulate_sv(kTruth, 3000, 101);
  SvConfig cfg;
  cfg.iterations = 6000;
  cfg.burn_in = 1000;
  const auto post = estimate_sv(mean_correct(s.returns), cfg);
  EXPECT_NEAR(post.posterior_mean.mu, -1.0, 0.35);
  EXPECT_NEAR(post.posterior_mean.phi, 0.95, 0.04);
  EXPECT_NEAR(post.posterior_mean.sigma_eta, 0.2, 0.08);
  const auto ci = credible_interval(post, SvParameter::Phi, 0.9);
  EXPECT_LT(ci.lower, ci.upper);
}

TEST(EstimateSv, NearConstantVolatilityGivesFlatPath) {
  // The default sigma^2 prior has its mode near sigma_eta = 0.085, which flat
  // data cannot overrule; a prior concentrated near zero makes the model itself
  // degenerate.
  const auto s = simulate_sv({-1.0, 0.9, 1e-8}, 3000, 21);
  SvConfig cfg;
  cfg.iterations = 4000;
  cfg.burn_in = 1000;
  cfg.priors.sigma2_scale = 1e-6;
  const auto post = estimate_sv(mean_correct(s.returns), cfg);
  EXPECT_LT(post.posterior_mean.sigma_eta, 0.05);
  for (double h : post.h_smoothed) EXPECT_NEAR(h, post.posterior_mean.mu, 0.1);
  for (double h : post.h_smoothed) EXPECT_NEAR(h, -1.0, 0.1);
}

TEST(FilterVolatility, ConstantVolatilityLimit) {
  const SvParams p{-1.0, 0.9, 1e-8};
  const auto s = simulate_sv(p, 1500, 31);
  const auto f = filter_volatility(s.returns, p, 2000, 1);
  ASSERT_EQ(f.h.size(), 1500u);
  for (std::size_t t = 20; t < f.h.size(); ++t) EXPECT_NEAR(f.h[t], -1.0, 1e-3);
}

TEST(FilterVolatility, BeatsConstantPredictor) {
  const auto s = simulate_sv(kTruth, 2000, 41);
  const auto f = filter_volatility(s.returns, kTruth, 5000, 2);
  const std::vector<double> flat(s.h.size(), kTruth.mu);
  EXPECT_LT(rmse(f.h, s.h), rmse(flat, s.h));
  EXPECT_EQ(f.ess.size(), s.h.size());
}

TEST(FilterVolatility, DeterministicAndFloor) {
  const auto s = simulate_sv(kTruth, 200, 5);
  EXPECT_EQ(filter_volatility(s.returns, kTruth, 500, 3).h,
            filter_volatility(s.returns, kTruth, 500, 3).h);
  EXPECT_THROW(filter_volatility(s.returns, kTruth, 50, 3), ConfigError);
}

TEST(AggregateMonthly, ConstantIsExact) {
  for (double c : {0.1, 0.7318, 1.0, 3.3, 1234.5678}) {
    const auto dates = days_of("2019-02", 20);
    const std::vector<double> sigma(dates.size(), c);
    const auto m = aggregate_monthly_sigma(dates, sigma);
    ASSERT_EQ(m.size(), 1u);
    EXPECT_EQ(m[0].volatility, c);
    const std::vector<double> h(dates.size(), 2.0 * std::log(c));
    const auto mh = aggregate_monthly(dates, h);
    EXPECT_NEAR(mh[0].volatility, c, 1e-14 * c);
  }
}

TEST(AggregateMonthly, HandArithmetic) {
  const auto m = aggregate_monthly_sigma({"2020-05-04", "2020-05-05"}, {3.0, 4.0});
  ASSERT_EQ(m.size(), 1u);
  EXPECT_NEAR(m[0].volatility, std::sqrt(12.5), 1e-14);
  EXPECT_EQ(m[0].days, 2);
  EXPECT_EQ(m[0].month, "2020-05");
}

TEST(AggregateMonthly, BoundedAndPermutationInvariant) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.05, 5.0);
  for (int rep = 0; rep < 50; ++rep) {
    auto dates = days_of("2021-07", 23);
    std::vector<double> sigma(dates.size());
    for (double& s : sigma) s = u(rng);
    const double v = aggregate_monthly_sigma(dates, sigma)[0].volatility;
    EXPECT_LE(*std::min_element(sigma.begin(), sigma.end()), v);
    EXPECT_GE(*std::max_element(sigma.begin(), sigma.end()), v);
    std::vector<std::size_t> idx(dates.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<std::string> d2;
    std::vector<double> s2;
    for (auto k : idx) {
      d2.push_back(dates[k]);
      s2.push_back(sigma[k]);
    }
    EXPECT_EQ(aggregate_monthly_sigma(d2, s2)[0].volatility, v);
  }
}

TEST(AggregateMonthly, MonotoneInEachDay) {
  auto dates = days_of("2010-01", 5);
  std::vector<double> sigma = {1.0, 2.0, 0.5, 1.5, 3.0};
  const double base = aggregate_monthly_sigma(dates, sigma)[0].volatility;
  sigma[2] = 0.9;
  EXPECT_GT(aggregate_monthly_sigma(dates, sigma)[0].volatility, base);
}

TEST(AggregateMonthly, EmptyMonthIsAnError) {
  std::vector<std::string> dates = {"2020-01-15", "2020-03-02"};
  try {
    aggregate_monthly_sigma(dates, {1.0, 1.0});
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("aggregation error"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("2020-02"), std::string::npos);
  }
}

TEST(Ess, IidChainNearLength) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  std::vector<double> x(4000);
  for (double& v : x) v = n(rng);
  const double ess = effective_sample_size(x);
  EXPECT_GT(ess, 3000.0);
  EXPECT_LT(ess, 5000.0);
  std::vector<double> ar(4000);
  ar[0] = n(rng);
  for (std::size_t t = 1; t < ar.size(); ++t) ar[t] = 0.9 * ar[t - 1] + n(rng);
  EXPECT_LT(effective_sample_size(ar), 600.0);
}
