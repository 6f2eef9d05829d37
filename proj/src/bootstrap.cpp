#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include <boost/math/distributions/normal.hpp>

#include "gscvol/error.hpp"
#include "gscvol/gsc.hpp"

namespace gscvol::gsc {

using Eigen::MatrixXd;

namespace {

// Estimation error of one simulated replicate in which every unit is a
// control with known zero effect.
struct Replicate {
  double avg = 0.0;
  std::vector<double> path;
  Eigen::VectorXd beta;
};

struct Stats {
  double se = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double p = 0.0;
};

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// `errors` are estimate-minus-truth draws; the bootstrap distribution of the
// target is estimate - error.
Stats summarize(double estimate, const std::vector<double>& errors, const GscConfig& config) {
  Stats s;
  s.se = sample_sd(errors);
  std::vector<double> draws(errors.size());
  std::transform(errors.begin(), errors.end(), draws.begin(),
                 [estimate](double e) { return estimate - e; });
  const double tail = (1.0 - config.ci_level) / 2.0;
  if (config.ci == CiScheme::Percentile) {
    s.lower = quantile(draws, tail);
    s.upper = quantile(draws, 1.0 - tail);
  } else {
    const double z = boost::math::quantile(boost::math::normal(), 1.0 - tail);
    s.lower = estimate - z * s.se;
    s.upper = estimate + z * s.se;
  }
  s.p = two_sided_p(draws);
  return s;
}

}  // namespace

BootstrapSummary bootstrap_inference(const PanelData& panel, const AttResult& fitted, int reps,
                                     std::uint64_t seed, const GscConfig& config) {
  if (reps < 200) throw ConfigError("bootstrap_reps must be at least 200 (got " +
                                    std::to_string(reps) + ")");
  if (!(config.ci_level > 0.0 && config.ci_level < 1.0))
    throw ConfigError("ci_level must lie in (0, 1)");
  const auto& model = fitted.model;
  const int r = model.r;
  const int n_ctrl = panel.n_control;
  const int n_tr = panel.n_treated();
  const int t = panel.n_periods();
  if (n_ctrl - n_tr < r + 1 || n_ctrl - n_tr < 1)
    throw DataError("bootstrap needs more control units than treated units plus factors");

  const factor::PanelBlock block = factor::control_block(panel);
  const MatrixXd systematic = model.fitted(block);
  int p1 = 0;
  for (bool dropped : model.dropped_covariates) p1 += dropped ? 0 : 1;
  const double nt = static_cast<double>(n_ctrl) * t;
  const double dof = static_cast<double>(n_ctrl - 1) * (t - 1) -
                     static_cast<double>(r) * (n_ctrl + t - 2) + static_cast<double>(r) * r - p1;
  const double inflate = dof > 0.0 ? std::sqrt(nt / dof) : 1.0;
  const MatrixXd residuals = model.residuals * inflate;

  std::vector<int> treated_t0(fitted.t0.begin(), fitted.t0.end());
  const std::size_t path_len = fitted.att_path.size();

  auto run_one = [&](int b) -> std::optional<Replicate> {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(b)};
    std::mt19937_64 rng(seq);
    std::vector<int> order(n_ctrl);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_int_distribution<int> pick(0, n_ctrl - 1);

    // fake treated units are the last n_tr entries of `order`
    PanelData sim;
    sim.times = panel.times;
    sim.covariate_names = panel.covariate_names;
    sim.n_control = n_ctrl - n_tr;
    sim.y.resize(n_ctrl, t);
    sim.d = Eigen::MatrixXi::Zero(n_ctrl, t);
    sim.x.assign(panel.x.size(), MatrixXd(n_ctrl, t));
    for (int row = 0; row < n_ctrl; ++row) {
      const int src = order[row];
      sim.units.push_back(panel.units[src]);
      sim.y.row(row) = systematic.row(src) + residuals.row(pick(rng));
      for (std::size_t c = 0; c < panel.x.size(); ++c) sim.x[c].row(row) = block.x[c].row(src);
      if (row >= sim.n_control) {
        const int pre = treated_t0[row - sim.n_control];
        sim.t0.push_back(pre);
        sim.d.row(row).tail(t - pre).setOnes();
      } else {
        sim.t0.push_back(t);
      }
    }
    try {
      const AttResult est = estimate_att_fixed(sim, r, config.ife);
      Replicate rep;
      rep.avg = est.avg_att;
      rep.beta = est.model.beta;
      rep.path.reserve(path_len);
      for (const auto& point : est.att_path) rep.path.push_back(point.att);
      return rep;
    } catch (const NumericalError&) {
      return std::nullopt;
    }
  };

  std::vector<std::optional<Replicate>> results(reps);
  int workers = config.threads > 0 ? config.threads
                                   : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::clamp(workers, 1, reps);
  if (workers == 1) {
    for (int b = 0; b < reps; ++b) results[b] = run_one(b);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (int b = next++; b < reps; b = next++) results[b] = run_one(b);
      });
    for (auto& th : pool) th.join();
  }

  BootstrapSummary summary;
  summary.replicates = reps;
  std::vector<double> avg_err;
  std::vector<std::vector<double>> path_err(path_len);
  std::vector<std::vector<double>> beta_err(model.beta.size());
  for (const auto& rep : results) {
    if (!rep) {
      ++summary.dropped;
      continue;
    }
    avg_err.push_back(rep->avg);
    for (std::size_t k = 0; k < path_len; ++k) path_err[k].push_back(rep->path[k]);
    for (Eigen::Index c = 0; c < model.beta.size(); ++c)
      beta_err[c].push_back(rep->beta(c) - model.beta(c));
  }
  if (summary.dropped * 10 > reps)
    throw NumericalError(std::to_string(summary.dropped) + " of " + std::to_string(reps) +
                         " bootstrap replicates failed to converge (limit 10%)");

  const Stats avg = summarize(fitted.avg_att, avg_err, config);
  summary.se = avg.se;
  summary.ci_lower = avg.lower;
  summary.ci_upper = avg.upper;
  summary.p_value = avg.p;
  summary.att_draws.resize(avg_err.size());
  std::transform(avg_err.begin(), avg_err.end(), summary.att_draws.begin(),
                 [&](double e) { return fitted.avg_att - e; });
  for (std::size_t k = 0; k < path_len; ++k) {
    const Stats s = summarize(fitted.att_path[k].att, path_err[k], config);
    summary.path_se.push_back(s.se);
    summary.path_lower.push_back(s.lower);
    summary.path_upper.push_back(s.upper);
  }
  for (Eigen::Index c = 0; c < model.beta.size(); ++c) {
    const Stats s = summarize(model.beta(c), beta_err[c], config);
    summary.beta.push_back({s.se, s.lower, s.upper, s.p});
  }
  return summary;
}

}  // namespace gscvol::gsc
