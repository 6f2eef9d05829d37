#include "gscvol/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "gscvol/artifacts.hpp"
#include "gscvol/error.hpp"
#include "gscvol/svol.hpp"
#include "gscvol/text.hpp"

namespace gscvol::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string cell(double v) { return std::isfinite(v) ? format_double(v) : ""; }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

json vector_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(num(v(k)));
  return out;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(vector_json(m.row(i).transpose()));
  return out;
}

std::string ci_name(gsc::CiScheme ci) {
  return ci == gsc::CiScheme::Percentile ? "percentile" : "normal";
}

// Treated rows in panel order, labelled with their adoption month.
std::vector<int> treated_rows(const PanelData& panel, const gsc::AttResult& result) {
  std::vector<int> rows;
  for (const auto& name : result.treated_units) rows.push_back(*panel.unit_index(name));
  return rows;
}

std::string att_path_csv(const gsc::AttResult& result) {
  std::string out = "event_time,att,n_units,se,ci_lower,ci_upper\n";
  for (const auto& p : result.att_path)
    out += std::to_string(p.event_time) + "," + cell(p.att) + "," + std::to_string(p.n_units) +
           "," + cell(p.se) + "," + cell(p.ci_lower) + "," + cell(p.ci_upper) + "\n";
  return out;
}

std::string counterfactual_csv(const gsc::AttResult& result, const PanelData& panel) {
  std::string out = "unit,time,event_time,treated,observed,counterfactual,effect\n";
  const auto rows = treated_rows(panel, result);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const int i = rows[k];
    for (int s = 0; s < panel.n_periods(); ++s) {
      const auto idx = static_cast<Eigen::Index>(k);
      out += csv_field(panel.units[i]) + "," + panel.times[s] + "," +
             std::to_string(s - result.t0[k]) + "," + std::to_string(panel.d(i, s)) + "," +
             cell(panel.y(i, s)) + "," + cell(result.counterfactuals(idx, s)) + "," +
             cell(result.individual_effects(idx, s)) + "\n";
    }
  }
  return out;
}

std::string factors_csv(const diagnostics::FactorExport& ex, const PanelData& panel) {
  std::string out = "time";
  for (Eigen::Index k = 0; k < ex.factors.cols(); ++k) out += ",f" + std::to_string(k + 1);
  out += "\n";
  for (Eigen::Index s = 0; s < ex.factors.rows(); ++s) {
    out += panel.times[s];
    for (Eigen::Index k = 0; k < ex.factors.cols(); ++k) out += "," + cell(ex.factors(s, k));
    out += "\n";
  }
  return out;
}

std::string loadings_csv(const diagnostics::FactorExport& ex) {
  std::string out = "unit,treated,alpha";
  for (Eigen::Index k = 0; k < ex.loadings.cols(); ++k) out += ",lambda" + std::to_string(k + 1);
  out += "\n";
  for (std::size_t i = 0; i < ex.units.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    out += csv_field(ex.units[i]) + "," + (ex.treated[i] ? "1" : "0") + "," + cell(ex.alpha(row));
    for (Eigen::Index k = 0; k < ex.loadings.cols(); ++k) out += "," + cell(ex.loadings(row, k));
    out += "\n";
  }
  return out;
}

std::string cv_csv(const factor::CvTable& table) {
  std::string out = "r,sigma2,ic,pc,mspe,selected\n";
  for (const auto& row : table.rows)
    out += std::to_string(row.r) + "," + cell(row.sigma2) + "," + cell(row.ic) + "," +
           cell(row.pc) + "," + cell(row.mspe) + "," + (row.r == table.selected_r ? "1" : "0") +
           "\n";
  return out;
}

json summary_json(const gsc::AttResult& r, const PanelData& panel) {
  json s;
  s["units"] = r.treated_units;
  json adoption = json::array();
  for (std::size_t k = 0; k < r.t0.size(); ++k) adoption.push_back(panel.times[r.t0[k]]);
  s["adoption"] = adoption;
  s["factors"] = r.model.r;
  s["avg_att"] = num(r.avg_att);
  s["se"] = num(r.se);
  s["ci_lower"] = num(r.ci_lower);
  s["ci_upper"] = num(r.ci_upper);
  s["p_value"] = num(r.p_value);
  s["post_cells"] = r.post_cells;
  return s;
}

// Daily CSV with a date column and one numeric column; optional grouping column.
struct DailyTable {
  std::vector<std::string> groups;
  std::vector<std::string> dates;
  std::vector<double> values;
};

DailyTable read_daily(const std::string& path, const std::string& date_col,
                      const std::string& value_col, const std::string& group_col) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open input " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty input " + path);
  const auto header = split_csv_line(line);
  auto find = [&](const std::string& name) -> int {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  };
  const int di = find(date_col);
  const int vi = find(value_col);
  if (di < 0) throw DataError("schema error: column '" + date_col + "' not found in " + path);
  if (vi < 0) throw DataError("schema error: column '" + value_col + "' not found in " + path);
  const int gi = group_col.empty() ? -1 : find(group_col);
  DailyTable table;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != static_cast<int>(header.size()))
      throw DataError("row " + std::to_string(row) + ": expected " +
                      std::to_string(header.size()) + " fields");
    const auto v = parse_double(fields[vi]);
    if (!v) throw DataError("row " + std::to_string(row) + ": cannot parse '" + fields[vi] + "'");
    table.groups.push_back(gi >= 0 ? fields[gi] : "");
    table.dates.push_back(fields[di]);
    table.values.push_back(*v);
  }
  if (table.values.empty()) throw DataError("no observations in " + path);
  return table;
}

std::string monthly_csv(const std::vector<std::pair<std::string, svol::MonthlyVolatility>>& rows,
                        bool with_unit) {
  std::string out = with_unit ? "unit,month,volatility,days\n" : "month,volatility,days\n";
  for (const auto& [unit, m] : rows)
    out += (with_unit ? csv_field(unit) + "," : std::string()) + m.month + "," +
           cell(m.volatility) + "," + std::to_string(m.days) + "\n";
  return out;
}

PanelData load_input_panel(const RunConfig& config) {
  PanelSchema schema = config.schema;
  schema.covariates.clear();
  PanelData panel = load_panel(config.input, schema);
  if (config.schema.covariates.empty()) return panel;
  return select_covariates(panel, config.no_covariates() ? std::vector<std::string>{}
                                                        : config.schema.covariates);
}

struct Run {
  const RunConfig& config;
  ArtifactWriter writer;
  std::vector<fs::path> inputs;

  explicit Run(const RunConfig& c) : config(c), writer(c.out_dir) {
    if (!c.input.empty() && c.command != "report") inputs.emplace_back(c.input);
  }
  std::string name(const std::string& suffix) const { return config.stem() + suffix; }
};

void write_att_artifacts(Run& run, const gsc::AttResult& result, const PanelData& panel,
                         const std::string& key) {
  const gsc::GscConfig gcfg = run.config.gsc_config();
  json doc;
  doc["command"] = run.config.command;
  doc["label"] = run.config.label;
  doc[key] = att_to_json(result, panel, gcfg);
  run.writer.json(run.name(".json"), doc);
  run.writer.text(run.name("_att_path.csv"), att_path_csv(result));
  run.writer.text(run.name("_counterfactuals.csv"), counterfactual_csv(result, panel));
}

void cmd_gsc(Run& run) {
  const PanelData panel = load_input_panel(run.config);
  const gsc::AttResult result = gsc::estimate_att(panel, run.config.gsc_config());
  write_att_artifacts(run, result, panel, "result");
  const auto ex = diagnostics::export_factors(result, panel);
  run.writer.text(run.name("_factors.csv"), factors_csv(ex, panel));
  run.writer.text(run.name("_loadings.csv"), loadings_csv(ex));
  if (result.cv) run.writer.text(run.name("_cv_table.csv"), cv_csv(*result.cv));
}

void cmd_cv(Run& run) {
  const PanelData panel = load_input_panel(run.config);
  const auto gcfg = run.config.gsc_config();
  const factor::CvTable table = factor::cross_validate(panel, gcfg.cv, gcfg.ife);
  json doc;
  doc["command"] = run.config.command;
  doc["label"] = run.config.label;
  doc["cv"] = cv_to_json(table);
  run.writer.json(run.name(".json"), doc);
  run.writer.text(run.name("_table.csv"), cv_csv(table));
}

void cmd_per_unit(Run& run) {
  const PanelData panel = load_input_panel(run.config);
  std::vector<std::string> units = run.config.units;
  if (units.empty())
    for (int i = panel.n_control; i < panel.n_units(); ++i) units.push_back(panel.units[i]);
  json list = json::array();
  std::string table = "unit,adoption,factors,avg_att,se,ci_lower,ci_upper,p_value,post_cells\n";
  for (const auto& unit : units) {
    const gsc::AttResult r = gsc::estimate_per_unit(panel, unit, run.config.gsc_config());
    json entry = att_to_json(r, gsc::restrict_treated(panel, {unit}), run.config.gsc_config());
    list.push_back(entry);
    table += csv_field(unit) + "," + panel.times[r.t0.front()] + "," + std::to_string(r.model.r) +
             "," + cell(r.avg_att) + "," + cell(r.se) + "," + cell(r.ci_lower) + "," +
             cell(r.ci_upper) + "," + cell(r.p_value) + "," + std::to_string(r.post_cells) + "\n";
  }
  json doc;
  doc["command"] = run.config.command;
  doc["label"] = run.config.label;
  doc["units"] = list;
  run.writer.json(run.name(".json"), doc);
  run.writer.text(run.name(".csv"), table);
}

void cmd_placebo_time(Run& run) {
  const PanelData panel = load_input_panel(run.config);
  const std::string start = run.config.placebo_start.empty()
                                ? diagnostics::default_placebo_start(panel, run.config.placebo_shift)
                                : *normalize_month(run.config.placebo_start);
  const PanelData placebo = diagnostics::in_time_placebo_panel(panel, start);
  const gsc::AttResult result = gsc::estimate_att(placebo, run.config.gsc_config());
  json doc;
  doc["command"] = run.config.command;
  doc["label"] = run.config.label;
  doc["placebo_start"] = start;
  doc["truncated_at"] = placebo.times.back();
  doc["result"] = att_to_json(result, placebo, run.config.gsc_config());
  run.writer.json(run.name(".json"), doc);
  run.writer.text(run.name("_att_path.csv"), att_path_csv(result));
}

void cmd_placebo_space(Run& run) {
  const PanelData panel = load_input_panel(run.config);
  gsc::GscConfig gcfg = run.config.gsc_config();
  double true_att = 0.0;
  bool estimated = false;
  if (run.config.true_att) {
    true_att = *run.config.true_att;
  } else {
    gsc::GscConfig point = gcfg;
    point.bootstrap_reps = 0;
    true_att = gsc::estimate_att(panel, point).avg_att;
    estimated = true;
  }
  std::vector<std::string> dates;
  for (const auto& d : run.config.adoption_dates) dates.push_back(*normalize_month(d));
  if (dates.empty()) dates = diagnostics::adoption_dates(panel);

  const diagnostics::PlaceboReport report =
      diagnostics::in_space_placebo(panel, true_att, dates, gcfg);
  json doc;
  doc["command"] = run.config.command;
  doc["label"] = run.config.label;
  doc["true_att_estimated"] = estimated;
  doc["adoption_dates"] = dates;
  doc["placebo"] = placebo_to_json(report);
  run.writer.json(run.name(".json"), doc);
  std::string table = "unit,adoption,placebo_att,factors,applicable,indicator\n";
  for (const auto& e : report.entries)
    table += csv_field(e.unit) + "," + e.adoption + "," + cell(e.placebo_att) + "," +
             std::to_string(e.selected_r) + "," + (e.applicable ? "1" : "0") + "," +
             (e.indicator ? "1" : "0") + "\n";
  run.writer.text(run.name(".csv"), table);
}

void cmd_equivalence(Run& run) {
  const PanelData panel = load_input_panel(run.config);
  const gsc::AttResult result = gsc::estimate_att(panel, run.config.gsc_config());
  const auto eq =
      diagnostics::equivalence_test(result, run.config.margin, run.config.margin_factor);
  json doc;
  doc["command"] = run.config.command;
  doc["label"] = run.config.label;
  doc["equivalence"] = equivalence_to_json(eq);
  doc["result"] = summary_json(result, panel);
  run.writer.json(run.name(".json"), doc);
  std::string table = "event_time,att,ci_lower,ci_upper,pass\n";
  for (const auto& p : eq.periods)
    table += std::to_string(p.event_time) + "," + cell(p.att) + "," + cell(p.ci_lower) + "," +
             cell(p.ci_upper) + "," + (p.pass ? "1" : "0") + "\n";
  run.writer.text(run.name(".csv"), table);
}

void cmd_sv_estimate(Run& run) {
  const RunConfig& c = run.config;
  DailyTable daily = read_daily(c.input, c.date_column, c.value_column, "");
  std::vector<std::string> dates = daily.dates;
  std::vector<double> raw = daily.values;
  if (c.series == "prices") {
    raw = svol::log_returns_from_prices(raw);
    dates.erase(dates.begin());
  }
  const std::vector<double> returns = svol::mean_correct(raw);
  svol::SvPosterior post = svol::estimate_sv(returns, c.sv_config());
  const svol::FilterResult filtered =
      svol::filter_volatility(returns, post.posterior_mean, c.particles, c.seed);
  post.h_filtered = filtered.h;

  json doc;
  doc["command"] = c.command;
  doc["label"] = c.label;
  doc["observations"] = returns.size();
  doc["iterations"] = c.iterations;
  doc["burn_in"] = c.burn_in;
  doc["seed"] = c.seed;
  doc["posterior_mean"] = {{"mu", post.posterior_mean.mu},
                           {"phi", post.posterior_mean.phi},
                           {"sigma_eta", post.posterior_mean.sigma_eta}};
  json intervals;
  for (double level : {0.90, 0.95}) {
    json li;
    for (auto [name, which] : {std::pair{"mu", svol::SvParameter::Mu},
                               std::pair{"phi", svol::SvParameter::Phi},
                               std::pair{"sigma_eta", svol::SvParameter::SigmaEta}}) {
      const auto iv = svol::credible_interval(post, which, level);
      li[name] = {iv.lower, iv.upper};
    }
    intervals[level == 0.90 ? "0.90" : "0.95"] = li;
  }
  doc["credible_intervals"] = intervals;
  doc["diagnostics"] = {{"ess_mu", post.diagnostics.ess_mu},
                        {"ess_phi", post.diagnostics.ess_phi},
                        {"ess_sigma_eta", post.diagnostics.ess_sigma_eta},
                        {"phi_acceptance", post.diagnostics.phi_acceptance},
                        {"particles", c.particles},
                        {"resample_count", filtered.resample_count}};
  doc["vol_source"] = c.vol_source;
  run.writer.json(run.name(".json"), doc);

  std::string draws = "mu,phi,sigma_eta\n";
  for (const auto& d : post.draws)
    draws += cell(d.mu) + "," + cell(d.phi) + "," + cell(d.sigma_eta) + "\n";
  run.writer.text(run.name("_draws.csv"), draws);

  std::string series = "date,return,h_filtered,h_smoothed,sigma_filtered,sigma_smoothed\n";
  for (std::size_t t = 0; t < returns.size(); ++t)
    series += dates[t] + "," + cell(returns[t]) + "," + cell(post.h_filtered[t]) + "," +
              cell(post.h_smoothed[t]) + "," + cell(std::exp(post.h_filtered[t] / 2.0)) + "," +
              cell(std::exp(post.h_smoothed[t] / 2.0)) + "\n";
  run.writer.text(run.name("_daily.csv"), series);

  const auto& h = c.vol_source == "smoothed" ? post.h_smoothed : post.h_filtered;
  std::vector<std::pair<std::string, svol::MonthlyVolatility>> rows;
  for (const auto& m : svol::aggregate_monthly(dates, h)) rows.emplace_back("", m);
  run.writer.text(run.name("_monthly.csv"), monthly_csv(rows, false));
}

void cmd_sv_aggregate(Run& run) {
  const RunConfig& c = run.config;
  const std::string column = "h_" + c.vol_source;
  const DailyTable daily = read_daily(c.input, c.date_column, column, c.schema.unit);
  std::map<std::string, std::pair<std::vector<std::string>, std::vector<double>>> groups;
  for (std::size_t k = 0; k < daily.values.size(); ++k) {
    auto& g = groups[daily.groups[k]];
    g.first.push_back(daily.dates[k]);
    g.second.push_back(daily.values[k]);
  }
  const bool with_unit = !(groups.size() == 1 && groups.begin()->first.empty());
  std::vector<std::pair<std::string, svol::MonthlyVolatility>> rows;
  json per_unit = json::object();
  for (const auto& [unit, series] : groups) {
    const auto monthly = svol::aggregate_monthly(series.first, series.second);
    per_unit[unit.empty() ? "series" : unit] = monthly.size();
    for (const auto& m : monthly) rows.emplace_back(unit, m);
  }
  json doc;
  doc["command"] = c.command;
  doc["label"] = c.label;
  doc["vol_source"] = c.vol_source;
  doc["aggregation"] = "root mean square of daily exp(h/2)";
  doc["months"] = per_unit;
  run.writer.json(run.name(".json"), doc);
  run.writer.text(run.name("_monthly.csv"), monthly_csv(rows, with_unit));
}

void cmd_report(Run& run) {
  const fs::path dir = run.config.input.empty() ? run.config.out_dir : fs::path(run.config.input);
  if (!fs::is_directory(dir)) throw DataError("report directory " + dir.string() + " not found");
  std::vector<fs::path> sources;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (entry.path().extension() == ".json" && name.find(".manifest.") == std::string::npos &&
        name.rfind("report", 0) != 0)
      sources.push_back(entry.path());
  }
  std::sort(sources.begin(), sources.end());
  run.inputs = sources;
  run.writer.text(run.name(".md"), render_report(dir));
}

// Report helpers -----------------------------------------------------------

std::string fmt(const json& v, int digits = 4) {
  if (!v.is_number()) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v.get<double>());
  return buf;
}

std::string interval(const json& lo, const json& hi) {
  return "[" + fmt(lo) + ", " + fmt(hi) + "]";
}

std::optional<json> load_artifact(const fs::path& dir, const std::string& name) {
  const fs::path p = dir / name;
  if (!fs::exists(p)) return std::nullopt;
  return read_json(p);
}

void cv_section(std::ostringstream& md, const json& cv) {
  md << "| r | sigma2 | IC | PC | MSPE |\n|---|---|---|---|---|\n";
  for (const auto& row : cv["rows"]) {
    const bool sel = row["r"] == cv["selected_r"];
    md << "| " << row["r"].get<int>() << (sel ? "*" : "") << " | " << fmt(row["sigma2"]) << " | "
       << fmt(row["ic"]) << " | " << fmt(row["pc"]) << " | " << fmt(row["mspe"]) << " |\n";
  }
  md << "\nSelected r = " << cv["selected_r"].get<int>()
     << (cv["tie_broken"].get<bool>() ? " (tie broken toward fewer factors)" : "") << ".\n";
  for (const auto& n : cv["notices"]) md << "\n> " << n.get<std::string>() << "\n";
}

void att_row(std::ostringstream& md, const std::string& label, const json& r) {
  md << "| " << label << " | " << r["factors"].get<int>() << " | " << fmt(r["avg_att"]) << " | "
     << fmt(r["se"]) << " | " << interval(r["ci_lower"], r["ci_upper"]) << " | "
     << fmt(r["p_value"]) << " |\n";
}

const char* kAttHeader =
    "| Specification | r | ATT | SE | CI | p |\n|---|---|---|---|---|---|\n";

}  // namespace

json att_to_json(const gsc::AttResult& r, const PanelData& panel, const gsc::GscConfig& config) {
  json out;
  out["treated_units"] = r.treated_units;
  out["t0"] = r.t0;
  json adoption = json::array();
  for (int pre : r.t0) adoption.push_back(panel.times[pre]);
  out["adoption"] = adoption;
  out["factors"] = r.model.r;
  out["avg_att"] = num(r.avg_att);
  out["post_cells"] = r.post_cells;
  out["se"] = num(r.se);
  out["ci_lower"] = num(r.ci_lower);
  out["ci_upper"] = num(r.ci_upper);
  out["p_value"] = num(r.p_value);
  out["ci_scheme"] = ci_name(config.ci);
  out["ci_level"] = config.ci_level;
  out["bootstrap_reps"] = r.bootstrap_reps;
  out["bootstrap_dropped"] = r.bootstrap_dropped;
  out["seed"] = r.seed;
  out["residual_sd"] = num(r.residual_sd);
  out["mspe"] = num(r.mspe);

  json beta = json::array();
  for (std::size_t c = 0; c < r.covariate_names.size(); ++c) {
    json b;
    b["name"] = r.covariate_names[c];
    b["estimate"] = num(r.model.beta(static_cast<Eigen::Index>(c)));
    b["dropped"] = c < r.model.dropped_covariates.size() && r.model.dropped_covariates[c];
    if (c < r.beta_inference.size()) {
      const auto& inf = r.beta_inference[c];
      b["se"] = num(inf.se);
      b["ci_lower"] = num(inf.ci_lower);
      b["ci_upper"] = num(inf.ci_upper);
      b["p_value"] = num(inf.p_value);
    } else {
      b["se"] = b["ci_lower"] = b["ci_upper"] = b["p_value"] = nullptr;
    }
    beta.push_back(b);
  }
  out["beta"] = beta;

  json path = json::array();
  for (const auto& p : r.att_path)
    path.push_back({{"event_time", p.event_time},
                    {"att", num(p.att)},
                    {"n_units", p.n_units},
                    {"se", num(p.se)},
                    {"ci_lower", num(p.ci_lower)},
                    {"ci_upper", num(p.ci_upper)}});
  out["att_path"] = path;
  out["individual_effects"] = matrix_json(r.individual_effects);
  out["counterfactuals"] = matrix_json(r.counterfactuals);
  out["treated_loadings"] = matrix_json(r.treated_loadings);
  out["treated_alpha"] = vector_json(r.treated_alpha);
  out["model"] = {{"r", r.model.r},
                  {"sigma2", num(r.model.sigma2)},
                  {"ic", num(r.model.ic)},
                  {"iterations", r.model.iterations},
                  {"alpha", vector_json(r.model.alpha)},
                  {"xi", vector_json(r.model.xi)},
                  {"beta", vector_json(r.model.beta)}};
  out["cv"] = r.cv ? cv_to_json(*r.cv) : json(nullptr);
  return out;
}

json cv_to_json(const factor::CvTable& table) {
  json rows = json::array();
  for (const auto& row : table.rows)
    rows.push_back({{"r", row.r},
                    {"sigma2", num(row.sigma2)},
                    {"ic", num(row.ic)},
                    {"pc", num(row.pc)},
                    {"mspe", num(row.mspe)}});
  return {{"rows", rows},
          {"selected_r", table.selected_r},
          {"tie_broken", table.tie_broken},
          {"notices", table.notices}};
}

json placebo_to_json(const diagnostics::PlaceboReport& report) {
  json entries = json::array();
  for (const auto& e : report.entries)
    entries.push_back({{"unit", e.unit},
                       {"adoption", e.adoption},
                       {"placebo_att", num(e.placebo_att)},
                       {"factors", e.selected_r},
                       {"applicable", e.applicable},
                       {"indicator", e.indicator}});
  json per = json::object();
  for (const auto& [date, p] : report.per_adoption_p) per[date] = num(p);
  return {{"true_att", num(report.true_att)},
          {"applicable", report.applicable},
          {"p_defined", report.p_defined},
          {"empirical_p", num(report.empirical_p)},
          {"per_adoption_p", per},
          {"excluded", report.excluded},
          {"entries", entries}};
}

json equivalence_to_json(const diagnostics::EquivalenceResult& result) {
  json periods = json::array();
  for (const auto& p : result.periods)
    periods.push_back({{"event_time", p.event_time},
                       {"att", num(p.att)},
                       {"ci_lower", num(p.ci_lower)},
                       {"ci_upper", num(p.ci_upper)},
                       {"pass", p.pass}});
  return {{"margin", num(result.margin)},
          {"overall", result.overall},
          {"verdict", result.verdict},
          {"periods", periods}};
}

std::string render_report(const fs::path& dir) {
  std::ostringstream md;
  md << "# gscvol report\n";

  md << "\n## Stochastic volatility\n\n";
  if (const auto sv = load_artifact(dir, "sv_estimate.json")) {
    const auto& pm = (*sv)["posterior_mean"];
    const auto& ci = (*sv)["credible_intervals"]["0.90"];
    md << "| Parameter | Posterior mean | 90% interval |\n|---|---|---|\n";
    for (const char* p : {"mu", "phi", "sigma_eta"})
      md << "| " << p << " | " << fmt(pm[p]) << " | " << interval(ci[p][0], ci[p][1]) << " |\n";
    md << "\nObservations: " << (*sv)["observations"].get<int>()
       << "; retained draws: " << (*sv)["iterations"].get<int>() - (*sv)["burn_in"].get<int>()
       << ".\n";
  } else {
    md << "_Not run._\n";
  }

  const auto gsc_doc = load_artifact(dir, "gsc.json");
  std::optional<json> cv;
  if (gsc_doc && !(*gsc_doc)["result"]["cv"].is_null()) cv = (*gsc_doc)["result"]["cv"];
  if (!cv)
    if (const auto c = load_artifact(dir, "cv.json")) cv = (*c)["cv"];
  md << "\n## Cross-validation\n\n";
  if (cv) {
    cv_section(md, *cv);
  } else {
    md << "_Not run._\n";
  }

  md << "\n## Average treatment effect on the treated\n\n";
  if (gsc_doc) {
    const auto& r = (*gsc_doc)["result"];
    md << kAttHeader;
    att_row(md, "baseline", r);
    md << "\nTreated units: " << r["treated_units"].size() << "; post-treatment cells: "
       << r["post_cells"].get<int>() << "; bootstrap replicates: "
       << r["bootstrap_reps"].get<int>() << " (" << r["bootstrap_dropped"].get<int>()
       << " dropped); seed " << r["seed"].get<std::uint64_t>() << "; intervals "
       << r["ci_scheme"].get<std::string>() << " at level " << fmt(r["ci_level"]) << ".\n";
    md << "\n### ATT by event time\n\n| Event time | ATT | CI | Units |\n|---|---|---|---|\n";
    for (const auto& p : r["att_path"])
      if (p["event_time"].get<int>() >= 0)
        md << "| " << p["event_time"].get<int>() << " | " << fmt(p["att"]) << " | "
           << interval(p["ci_lower"], p["ci_upper"]) << " | " << p["n_units"].get<int>() << " |\n";

    md << "\n## Covariate coefficients\n\n";
    if (r["beta"].empty()) {
      md << "_No covariates._\n";
    } else {
      md << "| Covariate | Beta | SE | CI | p |\n|---|---|---|---|---|\n";
      for (const auto& b : r["beta"])
        md << "| " << b["name"].get<std::string>() << (b["dropped"].get<bool>() ? " (dropped)" : "")
           << " | " << fmt(b["estimate"]) << " | " << fmt(b["se"]) << " | "
           << interval(b["ci_lower"], b["ci_upper"]) << " | " << fmt(b["p_value"]) << " |\n";
    }
  } else {
    md << "_Not run._\n\n## Covariate coefficients\n\n_Not run._\n";
  }

  md << "\n## Per-unit effects\n\n";
  if (const auto pu = load_artifact(dir, "per_unit.json")) {
    md << "| Unit | Adoption | r | ATT | SE | CI | p |\n|---|---|---|---|---|---|---|\n";
    for (const auto& u : (*pu)["units"])
      md << "| " << u["treated_units"][0].get<std::string>() << " | "
         << u["adoption"][0].get<std::string>() << " | " << u["factors"].get<int>() << " | "
         << fmt(u["avg_att"]) << " | " << fmt(u["se"]) << " | "
         << interval(u["ci_lower"], u["ci_upper"]) << " | " << fmt(u["p_value"]) << " |\n";
  } else {
    md << "_Not run._\n";
  }

  std::vector<fs::path> alternatives;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("gsc-", 0) == 0 && entry.path().extension() == ".json" &&
        name.find(".manifest.") == std::string::npos)
      alternatives.push_back(entry.path());
  }
  std::sort(alternatives.begin(), alternatives.end());
  md << "\n## Alternative specifications\n\n";
  if (alternatives.empty()) {
    md << "_Not run._\n";
  } else {
    md << kAttHeader;
    for (const auto& p : alternatives) {
      const auto doc = read_json(p);
      std::string covs;
      for (const auto& b : doc["result"]["beta"]) covs += (covs.empty() ? "" : ", ") + b["name"].get<std::string>();
      att_row(md, doc["label"].get<std::string>() + " (" + (covs.empty() ? "no covariates" : covs) + ")",
              doc["result"]);
    }
  }

  md << "\n## In-time placebo\n\n";
  if (const auto pt = load_artifact(dir, "placebo_time.json")) {
    md << "Placebo start " << (*pt)["placebo_start"].get<std::string>() << ", sample truncated at "
       << (*pt)["truncated_at"].get<std::string>() << ".\n\n"
       << kAttHeader;
    att_row(md, "placebo", (*pt)["result"]);
  } else {
    md << "_Not run._\n";
  }

  md << "\n## In-space placebo\n\n";
  if (const auto ps = load_artifact(dir, "placebo_space.json")) {
    const auto& p = (*ps)["placebo"];
    md << "| Unit | Adoption | Placebo ATT | r | Placebo >= true |\n|---|---|---|---|---|\n";
    for (const auto& e : p["entries"])
      md << "| " << e["unit"].get<std::string>() << " | " << e["adoption"].get<std::string>()
         << " | " << fmt(e["placebo_att"]) << " | " << e["factors"].get<int>() << " | "
         << (e["applicable"].get<bool>() ? (e["indicator"].get<bool>() ? "1" : "0") : "n/a")
         << " |\n";
    md << "\nTrue ATT " << fmt(p["true_att"]) << "; applicable runs " << p["applicable"].get<int>()
       << "; empirical p = " << fmt(p["empirical_p"], 5) << ".\n";
    for (const auto& [date, v] : p["per_adoption_p"].items())
      md << "\n- adoption " << date << ": p = " << fmt(v, 5);
    md << "\n";
    if (!p["excluded"].empty()) {
      md << "\nExcluded (r = 0):";
      for (const auto& e : p["excluded"]) md << " " << e.get<std::string>();
      md << "\n";
    }
  } else {
    md << "_Not run._\n";
  }

  md << "\n## Equivalence test\n\n";
  if (const auto eq = load_artifact(dir, "equivalence.json")) {
    const auto& e = (*eq)["equivalence"];
    md << "Margin " << fmt(e["margin"]) << ".\n\n| Event time | ATT | CI | Within margin |\n"
       << "|---|---|---|---|\n";
    for (const auto& p : e["periods"])
      md << "| " << p["event_time"].get<int>() << " | " << fmt(p["att"]) << " | "
         << interval(p["ci_lower"], p["ci_upper"]) << " | " << (p["pass"].get<bool>() ? "yes" : "no")
         << " |\n";
    md << "\n" << e["verdict"].get<std::string>() << "\n";
  } else {
    md << "_Not run._\n";
  }
  return md.str();
}

RunOutcome execute(const RunConfig& requested) {
  requested.validate();
  // Absolute paths keep the manifest usable from any working directory.
  RunConfig config = requested;
  if (!config.input.empty()) config.input = fs::absolute(config.input).lexically_normal().string();
  config.out_dir = fs::absolute(config.out_dir).lexically_normal();
  Run run(config);
  const std::string& c = config.command;
  if (c == "sv-estimate") {
    cmd_sv_estimate(run);
  } else if (c == "sv-aggregate") {
    cmd_sv_aggregate(run);
  } else if (c == "gsc") {
    cmd_gsc(run);
  } else if (c == "cv") {
    cmd_cv(run);
  } else if (c == "per-unit") {
    cmd_per_unit(run);
  } else if (c == "placebo-time") {
    cmd_placebo_time(run);
  } else if (c == "placebo-space") {
    cmd_placebo_space(run);
  } else if (c == "equivalence") {
    cmd_equivalence(run);
  } else {
    cmd_report(run);
  }
  RunOutcome outcome;
  outcome.artifacts = run.writer.names();
  outcome.manifest = manifest_path(config.out_dir, config.stem());
  write_atomic(outcome.manifest,
               build_manifest(config, outcome.artifacts, run.inputs).dump(2) + "\n");
  return outcome;
}

int exit_code_for_current_exception(std::ostream& err) {
  try {
    throw;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumericalError;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const nlohmann::json::exception& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::domain_error& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumericalError;
  }
}

int run_subcommand(const std::string& name, RunConfig config, std::ostream& err) {
  config.command = name;
  try {
    execute(config);
    return kOk;
  } catch (...) {
    return exit_code_for_current_exception(err);
  }
}

}  // namespace gscvol::cli
