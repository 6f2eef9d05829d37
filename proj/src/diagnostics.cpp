#include "gscvol/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "gscvol/error.hpp"

namespace gscvol::diagnostics {

using Eigen::MatrixXd;

namespace {

int earliest_adoption(const PanelData& panel) {
  if (panel.n_treated() == 0) throw DataError("panel has no treated units");
  int earliest = panel.n_periods();
  for (int i = panel.n_control; i < panel.n_units(); ++i) earliest = std::min(earliest, panel.t0[i]);
  return earliest;
}

// Copies rows `rows` of the panel and periods [0, periods); treated rows are
// the last `n_treated` entries with the given pre-treatment lengths.
PanelData take(const PanelData& panel, const std::vector<int>& rows, int periods,
               const std::vector<int>& treated_t0) {
  PanelData out;
  out.times.assign(panel.times.begin(), panel.times.begin() + periods);
  out.covariate_names = panel.covariate_names;
  const int n = static_cast<int>(rows.size());
  const int n_tr = static_cast<int>(treated_t0.size());
  out.n_control = n - n_tr;
  out.y.resize(n, periods);
  out.d = Eigen::MatrixXi::Zero(n, periods);
  out.x.assign(panel.x.size(), MatrixXd(n, periods));
  for (int k = 0; k < n; ++k) {
    const int src = rows[k];
    out.units.push_back(panel.units[src]);
    out.y.row(k) = panel.y.row(src).head(periods);
    for (std::size_t c = 0; c < panel.x.size(); ++c)
      out.x[c].row(k) = panel.x[c].row(src).head(periods);
    if (k >= out.n_control) {
      const int pre = treated_t0[k - out.n_control];
      out.t0.push_back(pre);
      out.d.row(k).tail(periods - pre).setOnes();
    } else {
      out.t0.push_back(periods);
    }
  }
  out.check();
  return out;
}

}  // namespace

std::string default_placebo_start(const PanelData& panel, int shift) {
  const int earliest = earliest_adoption(panel);
  if (shift < 1 || earliest - shift < 1)
    throw ConfigError("placebo shift " + std::to_string(shift) +
                      " leaves no pre-treatment periods before the placebo start");
  return panel.times[earliest - shift];
}

PanelData in_time_placebo_panel(const PanelData& panel, const std::string& placebo_start) {
  const int earliest = earliest_adoption(panel);
  const auto start = panel.time_index(placebo_start);
  if (!start) throw ConfigError("placebo start '" + placebo_start + "' is not a panel period");
  if (*start >= earliest)
    throw ConfigError("placebo start " + panel.times[*start] +
                      " must be strictly earlier than the earliest adoption " +
                      panel.times[earliest]);
  if (*start < 1) throw ConfigError("placebo start leaves no pre-treatment periods");
  std::vector<int> rows(panel.n_units());
  for (int i = 0; i < panel.n_units(); ++i) rows[i] = i;
  return take(panel, rows, earliest, std::vector<int>(panel.n_treated(), *start));
}

gsc::AttResult in_time_placebo(const PanelData& panel, const std::string& placebo_start,
                               const gsc::GscConfig& config) {
  return gsc::estimate_att(in_time_placebo_panel(panel, placebo_start), config);
}

std::vector<std::string> adoption_dates(const PanelData& panel) {
  std::vector<std::string> out;
  for (int i = panel.n_control; i < panel.n_units(); ++i) {
    const auto& label = panel.times[panel.t0[i]];
    if (std::find(out.begin(), out.end(), label) == out.end()) out.push_back(label);
  }
  return out;
}

PlaceboReport summarize_placebo(std::vector<PlaceboEntry> entries, double true_att) {
  PlaceboReport report;
  report.true_att = true_att;
  std::map<std::string, std::pair<int, int>> by_date;  // hits, applicable
  int hits = 0;
  for (auto& entry : entries) {
    auto& bucket = by_date[entry.adoption];
    if (!entry.applicable) {
      entry.indicator = false;
      report.excluded.push_back(entry.unit + "@" + entry.adoption);
      continue;
    }
    entry.indicator = entry.placebo_att >= true_att;
    ++report.applicable;
    ++bucket.second;
    if (entry.indicator) {
      ++hits;
      ++bucket.first;
    }
  }
  report.entries = std::move(entries);
  report.p_defined = report.applicable > 0;
  if (report.p_defined)
    report.empirical_p = static_cast<double>(hits) / static_cast<double>(report.applicable);
  for (const auto& [date, counts] : by_date)
    report.per_adoption_p[date] = counts.second > 0
                                      ? static_cast<double>(counts.first) / counts.second
                                      : std::numeric_limits<double>::quiet_NaN();
  return report;
}

PlaceboReport in_space_placebo(const PanelData& panel, double true_att,
                               const std::vector<std::string>& dates,
                               const gsc::GscConfig& config) {
  if (dates.empty()) throw ConfigError("in-space placebo needs at least one adoption date");
  std::vector<int> starts;
  for (const auto& date : dates) {
    const auto idx = panel.time_index(date);
    if (!idx || *idx < 1) throw ConfigError("adoption date '" + date + "' is not usable");
    starts.push_back(*idx);
  }
  gsc::GscConfig run = config;
  run.bootstrap_reps = 0;

  std::vector<PlaceboEntry> entries;
  for (int j = 0; j < panel.n_control; ++j) {
    std::vector<int> rows;
    for (int i = 0; i < panel.n_control; ++i)
      if (i != j) rows.push_back(i);
    rows.push_back(j);
    for (std::size_t d = 0; d < dates.size(); ++d) {
      const PanelData pseudo = take(panel, rows, panel.n_periods(), {starts[d]});
      const gsc::AttResult res = gsc::estimate_att(pseudo, run);
      PlaceboEntry entry;
      entry.unit = panel.units[j];
      entry.adoption = panel.times[starts[d]];
      entry.placebo_att = res.avg_att;
      entry.selected_r = res.model.r;
      entry.applicable = res.model.r > 0;
      entries.push_back(entry);
    }
  }
  return summarize_placebo(std::move(entries), true_att);
}

EquivalenceResult equivalence_test(const gsc::AttResult& result, std::optional<double> margin,
                                   double margin_factor) {
  EquivalenceResult out;
  out.margin = margin ? *margin : margin_factor * result.residual_sd;
  if (!(out.margin >= 0.0)) throw ConfigError("equivalence margin must be non-negative");
  for (const auto& point : result.att_path) {
    if (point.event_time >= 0) continue;
    if (!std::isfinite(point.ci_lower) || !std::isfinite(point.ci_upper))
      throw DataError("equivalence test needs pre-treatment confidence intervals; run with "
                      "bootstrap inference");
    EquivalencePoint p;
    p.event_time = point.event_time;
    p.att = point.att;
    p.ci_lower = point.ci_lower;
    p.ci_upper = point.ci_upper;
    p.pass = p.ci_lower >= -out.margin && p.ci_upper <= out.margin;
    out.periods.push_back(p);
  }
  if (out.periods.empty()) throw DataError("no pre-treatment periods in the ATT path");
  out.overall = std::all_of(out.periods.begin(), out.periods.end(),
                            [](const EquivalencePoint& p) { return p.pass; });
  out.verdict = out.overall
                    ? "equivalence shown: every pre-treatment interval lies within the margin"
                    : "inconclusive: some pre-treatment intervals cross the margin, so neither a "
                      "non-zero effect nor a negligible one can be ruled out";
  return out;
}

double pearson_correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size() || a.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const Eigen::ArrayXd da = a.array() - a.mean();
  const Eigen::ArrayXd db = b.array() - b.mean();
  const double denom = std::sqrt((da * da).sum() * (db * db).sum());
  if (!(denom > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return (da * db).sum() / denom;
}

FactorExport export_factors(const factor::FactorModel& model, const std::vector<std::string>& units,
                            const std::vector<bool>& treated) {
  FactorExport out;
  out.units = units;
  out.treated = treated;
  out.alpha = model.alpha;
  if (model.r == 0) {
    out.notice = "no latent factors (r = 0): nothing to export";
    out.factors.resize(model.xi.size(), 0);
    out.loadings.resize(static_cast<Eigen::Index>(units.size()), 0);
    return out;
  }
  if (static_cast<Eigen::Index>(units.size()) != model.loadings.rows() ||
      units.size() != treated.size())
    throw DataError("unit labels do not match the loading rows");
  out.factors = model.factors;
  out.loadings = model.loadings;
  for (int k = 0; k < model.r; ++k)
    out.alpha_loading_correlation.push_back(
        pearson_correlation(model.alpha, model.loadings.col(k)));
  return out;
}

FactorExport export_factors(const gsc::AttResult& result, const PanelData& panel) {
  factor::FactorModel stacked = result.model;
  const Eigen::Index n_ctrl = result.model.loadings.rows();
  const Eigen::Index n_tr = result.treated_loadings.rows();
  stacked.loadings.resize(n_ctrl + n_tr, result.model.r);
  stacked.loadings.topRows(n_ctrl) = result.model.loadings;
  stacked.loadings.bottomRows(n_tr) = result.treated_loadings;
  stacked.alpha.resize(n_ctrl + n_tr);
  stacked.alpha.head(n_ctrl) = result.model.alpha;
  stacked.alpha.tail(n_tr) = result.treated_alpha;
  std::vector<std::string> units(panel.units.begin(), panel.units.begin() + n_ctrl);
  units.insert(units.end(), result.treated_units.begin(), result.treated_units.end());
  std::vector<bool> treated(n_ctrl, false);
  treated.insert(treated.end(), n_tr, true);
  if (result.model.r == 0) stacked.loadings.resize(n_ctrl + n_tr, 0);
  return export_factors(stacked, units, treated);
}

}  // namespace gscvol::diagnostics
