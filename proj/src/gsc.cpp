#include "gscvol/gsc.hpp"

#include <algorithm>
#include <cmath>

#include "gscvol/error.hpp"

namespace gscvol::gsc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

TreatedFit fit_treated(const PanelData& panel, const factor::FactorModel& model) {
  const int r = model.r;
  const int n_tr = panel.n_treated();
  TreatedFit fit;
  fit.loadings.resize(n_tr, r);
  fit.alpha.resize(n_tr);
  for (int k = 0; k < n_tr; ++k) {
    const int i = panel.n_control + k;
    const int pre = panel.t0[i];
    VectorXd resid = panel.y.row(i).head(pre).transpose() - model.xi.head(pre);
    for (int c = 0; c < panel.n_covariates(); ++c)
      resid -= model.beta(c) * panel.x[c].row(i).head(pre).transpose();
    MatrixXd design(pre, r + 1);
    design.leftCols(r) = model.factors.topRows(pre);
    design.col(r).setOnes();
    const MatrixXd coef = factor::project_loadings(design, resid);
    fit.loadings.row(k) = coef.col(0).head(r).transpose();
    fit.alpha(k) = coef(r, 0);
  }
  return fit;
}

MatrixXd estimate_counterfactual(const PanelData& panel, const factor::FactorModel& model,
                                 const TreatedFit& treated) {
  const int n_tr = panel.n_treated();
  const int t = panel.n_periods();
  if (treated.loadings.rows() != n_tr || treated.alpha.size() != n_tr)
    throw DataError("dimension mismatch: loadings do not match the treated units");
  if (treated.loadings.cols() != model.factors.cols() || model.factors.rows() != t)
    throw DataError("dimension mismatch: loadings and factors disagree on r or T");
  if (model.beta.size() != panel.n_covariates())
    throw DataError("dimension mismatch: coefficient count differs from covariates");
  MatrixXd cf(n_tr, t);
  for (int k = 0; k < n_tr; ++k) {
    const int i = panel.n_control + k;
    Eigen::RowVectorXd row = model.xi.transpose().array() + treated.alpha(k);
    for (int c = 0; c < panel.n_covariates(); ++c) row += model.beta(c) * panel.x[c].row(i);
    if (model.r > 0) row += treated.loadings.row(k) * model.factors.transpose();
    cf.row(k) = row;
  }
  return cf;
}

namespace {

double untreated_residual_sd(const PanelData& panel, const factor::FactorModel& model,
                             const TreatedFit& treated) {
  double sum = 0.0, sum_sq = 0.0;
  long count = 0;
  for (int i = 0; i < panel.n_units(); ++i) {
    const double a = panel.is_treated(i) ? treated.alpha(i - panel.n_control) : model.alpha(i);
    for (int s = 0; s < panel.t0[i]; ++s) {
      double v = panel.y(i, s) - a - model.xi(s);
      for (int c = 0; c < panel.n_covariates(); ++c) v -= model.beta(c) * panel.x[c](i, s);
      sum += v;
      sum_sq += v * v;
      ++count;
    }
  }
  if (count < 2) return 0.0;
  const double mean = sum / count;
  return std::sqrt(std::max(0.0, (sum_sq - count * mean * mean) / (count - 1)));
}

}  // namespace

AttResult estimate_att_fixed(const PanelData& panel, int r, const factor::IfeOptions& ife) {
  if (panel.n_treated() == 0) throw DataError("no treated units: the ATT is undefined");
  if (panel.n_control < 1) throw DataError("no control units");
  AttResult out;
  out.model = factor::fit_ife(factor::control_block(panel), r, ife);
  const TreatedFit treated = fit_treated(panel, out.model);
  out.treated_loadings = treated.loadings;
  out.treated_alpha = treated.alpha;
  out.counterfactuals = estimate_counterfactual(panel, out.model, treated);
  out.individual_effects = panel.y.bottomRows(panel.n_treated()) - out.counterfactuals;
  out.covariate_names = panel.covariate_names;

  const int t = panel.n_periods();
  int max_pre = 0, max_post = 0;
  double post_sum = 0.0, pre_sq = 0.0;
  long pre_count = 0;
  out.post_cells = 0;
  for (int k = 0; k < panel.n_treated(); ++k) {
    const int i = panel.n_control + k;
    out.treated_units.push_back(panel.units[i]);
    out.t0.push_back(panel.t0[i]);
    max_pre = std::max(max_pre, panel.t0[i]);
    max_post = std::max(max_post, t - panel.t0[i]);
    for (int s = 0; s < t; ++s) {
      const double eff = out.individual_effects(k, s);
      if (s >= panel.t0[i]) {
        post_sum += eff;
        ++out.post_cells;
      } else {
        pre_sq += eff * eff;
        ++pre_count;
      }
    }
  }
  out.avg_att = post_sum / out.post_cells;
  out.mspe = pre_count > 0 ? pre_sq / pre_count : std::numeric_limits<double>::quiet_NaN();

  for (int e = -max_pre; e < max_post; ++e) {
    AttPoint point;
    point.event_time = e;
    double sum = 0.0;
    for (int k = 0; k < panel.n_treated(); ++k) {
      const int s = panel.t0[panel.n_control + k] + e;
      if (s < 0 || s >= t) continue;
      sum += out.individual_effects(k, s);
      ++point.n_units;
    }
    point.att = point.n_units > 0 ? sum / point.n_units : std::numeric_limits<double>::quiet_NaN();
    out.att_path.push_back(point);
  }
  out.residual_sd = untreated_residual_sd(panel, out.model, treated);
  return out;
}

AttResult estimate_att(const PanelData& input, const GscConfig& config) {
  const PanelData panel =
      config.covariates.empty() ? input : select_covariates(input, config.covariates);
  if (panel.n_treated() == 0) throw DataError("no treated units: the ATT is undefined");

  std::optional<factor::CvTable> cv;
  int r = 0;
  if (config.factors) {
    r = *config.factors;
  } else {
    cv = factor::cross_validate(panel, config.cv, config.ife);
    r = cv->selected_r;
  }
  AttResult result = estimate_att_fixed(panel, r, config.ife);
  result.cv = std::move(cv);
  result.seed = config.seed;

  if (config.bootstrap_reps > 0) {
    const BootstrapSummary boot =
        bootstrap_inference(panel, result, config.bootstrap_reps, config.seed, config);
    result.se = boot.se;
    result.ci_lower = boot.ci_lower;
    result.ci_upper = boot.ci_upper;
    result.p_value = boot.p_value;
    result.beta_inference = boot.beta;
    result.bootstrap_reps = boot.replicates;
    result.bootstrap_dropped = boot.dropped;
    for (std::size_t k = 0; k < result.att_path.size(); ++k) {
      result.att_path[k].ci_lower = boot.path_lower[k];
      result.att_path[k].ci_upper = boot.path_upper[k];
      result.att_path[k].se = boot.path_se[k];
    }
  }
  return result;
}

PanelData restrict_treated(const PanelData& panel, const std::vector<std::string>& keep) {
  std::vector<int> rows;
  for (int i = 0; i < panel.n_control; ++i) rows.push_back(i);
  for (int i = panel.n_control; i < panel.n_units(); ++i)
    if (std::find(keep.begin(), keep.end(), panel.units[i]) != keep.end()) rows.push_back(i);
  PanelData out;
  out.times = panel.times;
  out.covariate_names = panel.covariate_names;
  out.n_control = panel.n_control;
  const int n = static_cast<int>(rows.size());
  out.y.resize(n, panel.n_periods());
  out.d.resize(n, panel.n_periods());
  out.x.assign(panel.x.size(), MatrixXd(n, panel.n_periods()));
  for (int k = 0; k < n; ++k) {
    out.units.push_back(panel.units[rows[k]]);
    out.t0.push_back(panel.t0[rows[k]]);
    out.y.row(k) = panel.y.row(rows[k]);
    out.d.row(k) = panel.d.row(rows[k]);
    for (std::size_t c = 0; c < panel.x.size(); ++c) out.x[c].row(k) = panel.x[c].row(rows[k]);
  }
  return out;
}

AttResult estimate_per_unit(const PanelData& panel, const std::string& unit,
                            const GscConfig& config) {
  const auto idx = panel.unit_index(unit);
  if (!idx) throw DataError("unknown unit '" + unit + "'");
  if (!panel.is_treated(*idx)) throw DataError("unit '" + unit + "' is not treated");
  return estimate_att(restrict_treated(panel, {unit}), config);
}

double two_sided_p(const std::vector<double>& draws) {
  if (draws.empty()) return std::numeric_limits<double>::quiet_NaN();
  long le = 0, ge = 0;
  for (double v : draws) {
    if (v <= 0.0) ++le;
    if (v >= 0.0) ++ge;
  }
  const double n = static_cast<double>(draws.size());
  return std::clamp(2.0 * std::min(le / n, ge / n), 0.0, 1.0);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

}  // namespace gscvol::gsc
