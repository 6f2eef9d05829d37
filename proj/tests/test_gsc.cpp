#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "gscvol/error.hpp"
#include "gscvol/gsc.hpp"
#include "gscvol/simulate.hpp"

using namespace gscvol;
using namespace gscvol::gsc;
using Eigen::MatrixXd;

namespace {

factor::IfeOptions tight() {
  factor::IfeOptions o;
  o.tol = 1e-12;
  o.max_iter = 50000;
  return o;
}

PanelData noiseless(double effect, std::uint64_t seed = 4) {
  sim::PanelSpec spec;
  spec.noise_sd = 0.0;
  spec.effect = effect;
  return sim::simulate_panel(spec, seed).panel;
}

PanelData noisy(double effect, std::uint64_t seed) {
  sim::PanelSpec spec;
  spec.effect = effect;
  return sim::simulate_panel(spec, seed).panel;
}

GscConfig fixed_r(int r, int reps = 0) {
  GscConfig c;
  c.factors = r;
  c.bootstrap_reps = reps;
  c.threads = 1;
  return c;
}

// Same panel with the control rows in a different order.
PanelData permute_controls(const PanelData& p, const std::vector<int>& order) {
  PanelData q = p;
  for (int k = 0; k < p.n_control; ++k) {
    const int src = order[k];
    q.units[k] = p.units[src];
    q.y.row(k) = p.y.row(src);
    q.d.row(k) = p.d.row(src);
    q.t0[k] = p.t0[src];
    for (std::size_t c = 0; c < p.x.size(); ++c) q.x[c].row(k) = p.x[c].row(src);
  }
  return q;
}

}  // namespace

TEST(EstimateAtt, NoiselessNullEffectReproducesOutcomes) {
  const PanelData p = noiseless(0.0);
  const AttResult res = estimate_att_fixed(p, 2, tight());
  EXPECT_NEAR(res.avg_att, 0.0, 1e-8);
  const MatrixXd observed = p.y.bottomRows(p.n_treated());
  EXPECT_LT((res.counterfactuals - observed).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(EstimateAtt, NoiselessUnitEffectIsRecoveredInEveryCell) {
  const PanelData p = noiseless(1.0);
  const AttResult res = estimate_att_fixed(p, 2, tight());
  EXPECT_NEAR(res.avg_att, 1.0, 1e-8);
  for (int k = 0; k < p.n_treated(); ++k)
    for (int s = 0; s < p.n_periods(); ++s)
      EXPECT_NEAR(res.individual_effects(k, s), s >= res.t0[k] ? 1.0 : 0.0, 1e-7);
  for (const auto& point : res.att_path)
    EXPECT_NEAR(point.att, point.event_time >= 0 ? 1.0 : 0.0, 1e-7) << point.event_time;
}

TEST(EstimateAtt, ShiftingTreatedPostOutcomesShiftsAtt) {
  const PanelData p = noisy(0.5, 6);
  PanelData q = p;
  for (int i = p.n_control; i < p.n_units(); ++i)
    q.y.row(i).tail(p.n_periods() - p.t0[i]).array() += 0.75;
  const AttResult a = estimate_att_fixed(p, 2);
  const AttResult b = estimate_att_fixed(q, 2);
  EXPECT_NEAR(b.avg_att - a.avg_att, 0.75, 1e-10);
}

TEST(EstimateAtt, InvariantToControlOrder) {
  const PanelData p = noisy(1.0, 7);
  std::vector<int> order(p.n_control);
  std::iota(order.begin(), order.end(), 0);
  std::reverse(order.begin(), order.end());
  std::swap(order[0], order[5]);
  const AttResult a = estimate_att_fixed(p, 2, tight());
  const AttResult b = estimate_att_fixed(permute_controls(p, order), 2, tight());
  EXPECT_NEAR(a.avg_att, b.avg_att, 1e-8);
  EXPECT_LT((a.counterfactuals - b.counterfactuals).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(EstimateAtt, AverageIsMeanOfPostTreatmentEffects) {
  const PanelData p = noisy(1.0, 8);
  const AttResult res = estimate_att_fixed(p, 2);
  double sum = 0.0;
  int cells = 0;
  for (int k = 0; k < p.n_treated(); ++k)
    for (int s = res.t0[k]; s < p.n_periods(); ++s) {
      sum += p.y(p.n_control + k, s) - res.counterfactuals(k, s);
      ++cells;
    }
  EXPECT_EQ(res.post_cells, cells);
  EXPECT_NEAR(res.avg_att, sum / cells, 1e-12);
}

TEST(EstimateAtt, EventTimePathAveragesAvailableUnits) {
  const PanelData p = noisy(1.0, 9);
  const AttResult res = estimate_att_fixed(p, 2);
  const int max_pre = *std::max_element(res.t0.begin(), res.t0.end());
  ASSERT_EQ(res.att_path.front().event_time, -max_pre);
  for (const auto& point : res.att_path) {
    double sum = 0.0;
    int count = 0;
    for (int k = 0; k < p.n_treated(); ++k) {
      const int s = res.t0[k] + point.event_time;
      if (s < 0 || s >= p.n_periods()) continue;
      sum += res.individual_effects(k, s);
      ++count;
    }
    EXPECT_EQ(point.n_units, count);
    EXPECT_NEAR(point.att, sum / count, 1e-12);
  }
}

TEST(EstimateAtt, ReportsFitSummaries) {
  const AttResult res = estimate_att_fixed(noisy(1.0, 10), 2);
  EXPECT_GT(res.residual_sd, 0.0);
  EXPECT_TRUE(std::isfinite(res.mspe));
  EXPECT_EQ(res.treated_units.size(), 3u);
  EXPECT_EQ(res.treated_loadings.rows(), 3);
  EXPECT_EQ(res.treated_loadings.cols(), 2);
  EXPECT_FALSE(res.has_inference());
}

TEST(EstimateAtt, NoTreatedUnitsIsAnError) {
  sim::PanelSpec spec;
  spec.treated_t0 = {};
  EXPECT_THROW(estimate_att_fixed(sim::simulate_panel(spec, 1).panel, 1), DataError);
}

TEST(EstimateAtt, CrossValidationChoosesFactorCount) {
  GscConfig config;
  config.bootstrap_reps = 0;
  config.cv = {0, 3};
  const AttResult res = estimate_att(noisy(1.0, 11), config);
  ASSERT_TRUE(res.cv.has_value());
  EXPECT_EQ(res.model.r, res.cv->selected_r);
}

TEST(EstimateAtt, CovariateSubset) {
  GscConfig config = fixed_r(2);
  config.covariates = {"ird"};
  const AttResult res = estimate_att(noisy(1.0, 12), config);
  ASSERT_EQ(res.model.beta.size(), 1);
  EXPECT_EQ(res.covariate_names, std::vector<std::string>{"ird"});
  config.covariates = {"missing"};
  EXPECT_THROW(estimate_att(noisy(1.0, 12), config), DataError);
}

TEST(Counterfactual, DimensionMismatchIsReported) {
  const PanelData p = noisy(0.0, 13);
  const AttResult res = estimate_att_fixed(p, 2);
  TreatedFit bad{MatrixXd::Zero(2, 2), Eigen::VectorXd::Zero(2)};
  EXPECT_THROW(estimate_counterfactual(p, res.model, bad), DataError);
  TreatedFit wrong_r{MatrixXd::Zero(3, 1), Eigen::VectorXd::Zero(3)};
  EXPECT_THROW(estimate_counterfactual(p, res.model, wrong_r), DataError);
}

TEST(Bootstrap, SameSeedGivesIdenticalInference) {
  const PanelData p = noisy(1.0, 14);
  GscConfig config = fixed_r(2, 200);
  config.seed = 5;
  const AttResult a = estimate_att(p, config);
  const AttResult b = estimate_att(p, config);
  EXPECT_EQ(a.se, b.se);
  EXPECT_EQ(a.ci_lower, b.ci_lower);
  EXPECT_EQ(a.ci_upper, b.ci_upper);
  EXPECT_EQ(a.p_value, b.p_value);
  config.seed = 6;
  const AttResult c = estimate_att(p, config);
  EXPECT_NE(a.se, c.se);
  EXPECT_EQ(a.avg_att, c.avg_att);
}

TEST(Bootstrap, ThreadCountDoesNotChangeResults) {
  const PanelData p = noisy(1.0, 15);
  GscConfig one = fixed_r(1, 200);
  GscConfig four = one;
  four.threads = 4;
  const BootstrapSummary a = bootstrap_inference(p, estimate_att_fixed(p, 1), 200, 3, one);
  const BootstrapSummary b = bootstrap_inference(p, estimate_att_fixed(p, 1), 200, 3, four);
  EXPECT_EQ(a.att_draws, b.att_draws);
}

TEST(Bootstrap, SummariesAreWellFormed) {
  const PanelData p = noisy(1.0, 16);
  const AttResult res = estimate_att(p, fixed_r(2, 200));
  EXPECT_TRUE(res.has_inference());
  EXPECT_EQ(res.bootstrap_reps, 200);
  EXPECT_GE(res.p_value, 0.0);
  EXPECT_LE(res.p_value, 1.0);
  EXPECT_LE(res.ci_lower, res.ci_upper);
  EXPECT_GT(res.se, 0.0);
  ASSERT_EQ(res.beta_inference.size(), 3u);
  for (const auto& b : res.beta_inference) {
    EXPECT_LE(b.ci_lower, b.ci_upper);
    EXPECT_GE(b.p_value, 0.0);
    EXPECT_LE(b.p_value, 1.0);
  }
  for (const auto& point : res.att_path)
    if (point.n_units > 0) EXPECT_LE(point.ci_lower, point.ci_upper);
}

TEST(Bootstrap, NormalIntervalIsSymmetric) {
  GscConfig config = fixed_r(2, 200);
  config.ci = CiScheme::Normal;
  const AttResult res = estimate_att(noisy(1.0, 17), config);
  EXPECT_NEAR(res.avg_att - res.ci_lower, res.ci_upper - res.avg_att, 1e-12);
  EXPECT_NEAR(res.ci_upper - res.avg_att, 1.959963984540054 * res.se, 1e-9);
}

TEST(Bootstrap, NoiselessPanelHasNegligibleSpread) {
  GscConfig config = fixed_r(2, 200);
  config.ife = tight();
  const AttResult res = estimate_att(noiseless(1.0), config);
  EXPECT_LE(res.se, 1e-6);
  EXPECT_NEAR(res.ci_lower, 1.0, 1e-6);
  EXPECT_NEAR(res.ci_upper, 1.0, 1e-6);
}

TEST(Bootstrap, TooFewReplicatesIsAConfigError) {
  const PanelData p = noisy(1.0, 18);
  EXPECT_THROW(estimate_att(p, fixed_r(2, 199)), ConfigError);
  EXPECT_THROW(bootstrap_inference(p, estimate_att_fixed(p, 2), 50, 1), ConfigError);
}

TEST(PerUnit, SingleTreatedPanelMatchesPooledEstimate) {
  sim::PanelSpec spec;
  spec.treated_t0 = {100};
  spec.effect = 1.0;
  const PanelData p = sim::simulate_panel(spec, 19).panel;
  const AttResult pooled = estimate_att(p, fixed_r(2));
  const AttResult single = estimate_per_unit(p, p.units.back(), fixed_r(2));
  EXPECT_EQ(pooled.avg_att, single.avg_att);
}

TEST(PerUnit, RecoversDifferentEffectsPerUnit) {
  PanelData p = noiseless(0.0, 20);
  const double effects[] = {0.0, 1.0, 2.0};
  for (int k = 0; k < 3; ++k) {
    const int i = p.n_control + k;
    p.y.row(i).tail(p.n_periods() - p.t0[i]).array() += effects[k];
  }
  GscConfig config = fixed_r(2);
  config.ife = tight();
  for (int k = 0; k < 3; ++k) {
    const AttResult res = estimate_per_unit(p, p.units[p.n_control + k], config);
    ASSERT_EQ(res.treated_units.size(), 1u);
    EXPECT_NEAR(res.avg_att, effects[k], 1e-6) << p.units[p.n_control + k];
  }
}

TEST(PerUnit, RejectsUnknownAndControlUnits) {
  const PanelData p = noisy(1.0, 21);
  EXPECT_THROW(estimate_per_unit(p, "Atlantis", fixed_r(2)), DataError);
  EXPECT_THROW(estimate_per_unit(p, p.units[0], fixed_r(2)), DataError);
}

TEST(RestrictTreated, KeepsControlsAndSelectedUnits) {
  const PanelData p = noisy(1.0, 22);
  const PanelData q = restrict_treated(p, {p.units[p.n_control + 1]});
  EXPECT_EQ(q.n_control, p.n_control);
  EXPECT_EQ(q.n_treated(), 1);
  EXPECT_EQ(q.t0.back(), p.t0[p.n_control + 1]);
  EXPECT_TRUE(q.y.row(q.n_units() - 1) == p.y.row(p.n_control + 1));
}

TEST(TwoSidedP, Arithmetic) {
  EXPECT_DOUBLE_EQ(two_sided_p({-1.0, 1.0, 2.0, 3.0}), 0.5);
  EXPECT_DOUBLE_EQ(two_sided_p({1.0, 2.0, 3.0}), 0.0);
  EXPECT_DOUBLE_EQ(two_sided_p({-1.0, 1.0}), 1.0);
  EXPECT_DOUBLE_EQ(two_sided_p({0.0, 0.0, 1.0}), 1.0);
  EXPECT_TRUE(std::isnan(two_sided_p({})));
}

TEST(Quantile, LinearInterpolation) {
  EXPECT_DOUBLE_EQ(quantile({3.0, 1.0, 2.0, 4.0}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({3.0, 1.0, 2.0, 4.0}, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile({3.0, 1.0, 2.0, 4.0}, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile({0.0, 10.0}, 0.025), 0.25);
}
