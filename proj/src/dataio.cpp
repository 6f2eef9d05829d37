#include "gscvol/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "gscvol/error.hpp"
#include "gscvol/text.hpp"

namespace gscvol {

namespace {

struct Cell {
  double outcome = 0.0;
  int treatment = 0;
  std::vector<double> covariates;
};

int month_ordinal(const std::string& month) {
  int year = std::stoi(month.substr(0, 4));
  int mon = std::stoi(month.substr(5, 2));
  return year * 12 + (mon - 1);
}

std::string month_label(int ordinal) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d", ordinal / 12, ordinal % 12 + 1);
  return buf;
}

}  // namespace

std::optional<int> PanelData::unit_index(const std::string& name) const {
  auto it = std::find(units.begin(), units.end(), name);
  if (it == units.end()) return std::nullopt;
  return static_cast<int>(it - units.begin());
}

std::optional<int> PanelData::time_index(const std::string& label) const {
  auto norm = normalize_month(label);
  if (!norm) return std::nullopt;
  auto it = std::find(times.begin(), times.end(), *norm);
  if (it == times.end()) return std::nullopt;
  return static_cast<int>(it - times.begin());
}

void PanelData::check() const {
  const int n = n_units();
  const int t = n_periods();
  if (y.rows() != n || y.cols() != t || d.rows() != n || d.cols() != t)
    throw DataError("panel shape mismatch: outcome/treatment must be N x T");
  if (covariate_names.size() != x.size())
    throw DataError("covariate names do not match covariate count");
  for (const auto& xk : x)
    if (xk.rows() != n || xk.cols() != t) throw DataError("covariate matrix is not N x T");
  if (static_cast<int>(t0.size()) != n) throw DataError("t0 must have one entry per unit");
  if (n_control < 0 || n_control > n) throw DataError("invalid control count");
  auto report = validate_treatment(d);
  if (!report.ok) throw DataError(report.issues.front().message);
  for (int i = 0; i < n; ++i) {
    if (!is_treated(i) && report.t0[i] != t)
      throw DataError("control unit " + units[i] + " has treated periods");
    if (is_treated(i) && report.t0[i] == t)
      throw DataError("treated unit " + units[i] + " is never treated");
    if (report.t0[i] != t0[i]) throw DataError("t0 inconsistent with treatment matrix");
  }
}

TreatmentReport validate_treatment(const Eigen::MatrixXi& d) {
  TreatmentReport report;
  const int n = static_cast<int>(d.rows());
  const int t = static_cast<int>(d.cols());
  report.t0.assign(n, t);
  for (int i = 0; i < n; ++i) {
    int first = t;
    for (int s = 0; s < t; ++s) {
      const int v = d(i, s);
      if (v != 0 && v != 1) {
        report.ok = false;
        report.issues.push_back({i, s, "non-binary treatment value at unit " + std::to_string(i) +
                                           ", time " + std::to_string(s + 1)});
        break;
      }
      if (v == 1 && first == t) first = s;
      if (v == 0 && first < t) {
        report.ok = false;
        report.issues.push_back({i, s, "treatment reversal at unit " + std::to_string(i) +
                                           ", time " + std::to_string(s + 1)});
        break;
      }
    }
    report.t0[i] = first;
    if (first == 0 && t > 0) {
      report.ok = false;
      report.issues.push_back(
          {i, 0, "no pre-treatment periods at unit " + std::to_string(i)});
    }
  }
  return report;
}

std::optional<std::string> normalize_month(const std::string& raw) {
  std::string text = trim(raw);
  if (text.size() != 7 && text.size() != 10) return std::nullopt;
  for (std::size_t k = 0; k < text.size(); ++k) {
    const bool sep = (k == 4 || k == 7);
    if (sep) {
      if (text[k] != '-' && text[k] != '/') return std::nullopt;
    } else if (!std::isdigit(static_cast<unsigned char>(text[k]))) {
      return std::nullopt;
    }
  }
  const int mon = std::stoi(text.substr(5, 2));
  if (mon < 1 || mon > 12) return std::nullopt;
  if (text.size() == 10) {
    const int day = std::stoi(text.substr(8, 2));
    if (day < 1 || day > 31) return std::nullopt;
  }
  return text.substr(0, 4) + "-" + text.substr(5, 2);
}

std::string add_months(const std::string& month, int offset) {
  return month_label(month_ordinal(month) + offset);
}

PanelData assemble_panel(std::vector<std::string> units, std::vector<std::string> times,
                         Eigen::MatrixXd y, Eigen::MatrixXi d, std::vector<Eigen::MatrixXd> x,
                         std::vector<std::string> covariate_names) {
  const int n = static_cast<int>(units.size());
  auto report = validate_treatment(d);
  if (!report.ok) throw DataError(report.issues.front().message);
  const int t = static_cast<int>(times.size());

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const bool ta = report.t0[a] < t;
    const bool tb = report.t0[b] < t;
    if (ta != tb) return !ta;
    return units[a] < units[b];
  });

  PanelData panel;
  panel.times = std::move(times);
  panel.covariate_names = std::move(covariate_names);
  panel.y.resize(n, t);
  panel.d.resize(n, t);
  panel.x.assign(x.size(), Eigen::MatrixXd(n, t));
  for (int row = 0; row < n; ++row) {
    const int src = order[row];
    panel.units.push_back(units[src]);
    panel.y.row(row) = y.row(src);
    panel.d.row(row) = d.row(src);
    for (std::size_t k = 0; k < x.size(); ++k) panel.x[k].row(row) = x[k].row(src);
    panel.t0.push_back(report.t0[src]);
    if (report.t0[src] == t) ++panel.n_control;
  }
  panel.check();
  return panel;
}

PanelData read_panel(std::istream& in, const PanelSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty panel file");
  const auto header = split_csv_line(line);
  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("schema error: missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_unit = column(schema.unit);
  const std::size_t c_time = column(schema.time);
  const std::size_t c_out = column(schema.outcome);
  const std::size_t c_treat = column(schema.treatment);

  std::vector<std::string> cov_names = schema.covariates;
  if (cov_names.empty()) {
    for (std::size_t k = 0; k < header.size(); ++k)
      if (k != c_unit && k != c_time && k != c_out && k != c_treat) cov_names.push_back(header[k]);
  }
  std::vector<std::size_t> c_cov;
  for (const auto& name : cov_names) c_cov.push_back(column(name));

  std::map<std::string, std::map<std::string, Cell>> cells;
  std::map<std::string, int> first_seen;
  std::vector<std::string> time_list;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw DataError("row " + std::to_string(row) + ": expected " +
                      std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    auto month = normalize_month(fields[c_time]);
    if (!month)
      throw DataError("row " + std::to_string(row) + ": cannot parse time '" + fields[c_time] +
                      "' as YYYY-MM");
    const std::string& unit = fields[c_unit];
    if (unit.empty()) throw DataError("row " + std::to_string(row) + ": empty unit identifier");

    Cell cell;
    auto num = parse_double(fields[c_out]);
    if (!num)
      throw DataError("row " + std::to_string(row) + ": missing or non-numeric outcome for unit " +
                      unit + ", time " + *month);
    cell.outcome = *num;
    const std::string treat = trim(fields[c_treat]);
    if (treat == "0") {
      cell.treatment = 0;
    } else if (treat == "1") {
      cell.treatment = 1;
    } else {
      throw DataError("schema error: row " + std::to_string(row) +
                      ": treatment must be 0 or 1, got '" + treat + "'");
    }
    for (std::size_t k = 0; k < c_cov.size(); ++k) {
      auto v = parse_double(fields[c_cov[k]]);
      if (!v)
        throw DataError("row " + std::to_string(row) + ": missing or non-numeric covariate '" +
                        cov_names[k] + "' for unit " + unit + ", time " + *month);
      cell.covariates.push_back(*v);
    }
    auto& unit_cells = cells[unit];
    if (!unit_cells.emplace(*month, std::move(cell)).second)
      throw DataError("row " + std::to_string(row) + ": duplicate cell for unit " + unit +
                      ", time " + *month);
    time_list.push_back(*month);
  }
  if (cells.empty()) throw DataError("panel file has no data rows");

  std::sort(time_list.begin(), time_list.end());
  time_list.erase(std::unique(time_list.begin(), time_list.end()), time_list.end());

  const int n = static_cast<int>(cells.size());
  const int t = static_cast<int>(time_list.size());
  std::vector<std::string> units;
  Eigen::MatrixXd y(n, t);
  Eigen::MatrixXi d(n, t);
  std::vector<Eigen::MatrixXd> x(cov_names.size(), Eigen::MatrixXd(n, t));
  int i = 0;
  for (const auto& [unit, by_time] : cells) {
    units.push_back(unit);
    for (int s = 0; s < t; ++s) {
      auto it = by_time.find(time_list[s]);
      if (it == by_time.end())
        throw DataError("unbalanced panel: unit " + unit + " has no observation for " +
                        time_list[s]);
      y(i, s) = it->second.outcome;
      d(i, s) = it->second.treatment;
      for (std::size_t k = 0; k < cov_names.size(); ++k) x[k](i, s) = it->second.covariates[k];
    }
    ++i;
  }
  auto report = validate_treatment(d);
  if (!report.ok) {
    const auto& issue = report.issues.front();
    throw DataError(issue.message + " (unit " + units[issue.unit] + ", " +
                    time_list[issue.time] + ")");
  }
  return assemble_panel(std::move(units), std::move(time_list), std::move(y), std::move(d),
                        std::move(x), std::move(cov_names));
}

PanelData load_panel(const std::filesystem::path& path, const PanelSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open panel file " + path.string());
  return read_panel(in, schema);
}

void write_panel(std::ostream& out, const PanelData& panel) {
  out << "unit,time,outcome,treatment";
  for (const auto& name : panel.covariate_names) out << ',' << name;
  out << '\n';
  for (int i = 0; i < panel.n_units(); ++i) {
    for (int s = 0; s < panel.n_periods(); ++s) {
      out << panel.units[i] << ',' << panel.times[s] << ',' << format_double(panel.y(i, s)) << ','
          << panel.d(i, s);
      for (const auto& xk : panel.x) out << ',' << format_double(xk(i, s));
      out << '\n';
    }
  }
}

void save_panel(const std::filesystem::path& path, const PanelData& panel) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write panel file " + path.string());
  write_panel(out, panel);
}

PanelData select_covariates(const PanelData& panel, const std::vector<std::string>& names) {
  PanelData out = panel;
  out.x.clear();
  out.covariate_names.clear();
  for (const auto& name : names) {
    auto it = std::find(panel.covariate_names.begin(), panel.covariate_names.end(), name);
    if (it == panel.covariate_names.end())
      throw DataError("unknown covariate '" + name + "'");
    out.x.push_back(panel.x[static_cast<std::size_t>(it - panel.covariate_names.begin())]);
    out.covariate_names.push_back(name);
  }
  return out;
}

double compound_to_monthly(double annual_rate_percent) {
  if (!(annual_rate_percent > -100.0))
    throw std::domain_error("annual rate must exceed -100 percent");
  return 100.0 * (std::pow(1.0 + annual_rate_percent / 100.0, 1.0 / 12.0) - 1.0);
}

namespace {

MonthlySeries aligned_difference(const MonthlySeries& a, const MonthlySeries& b, double sign) {
  if (a.months.size() != a.values.size() || b.months.size() != b.values.size())
    throw DataError("series months and values differ in length");
  std::map<std::string, double> lookup;
  for (std::size_t k = 0; k < b.months.size(); ++k) lookup[b.months[k]] = b.values[k];
  std::vector<std::string> missing;
  MonthlySeries out;
  for (std::size_t k = 0; k < a.months.size(); ++k) {
    auto it = lookup.find(a.months[k]);
    if (it == lookup.end()) {
      missing.push_back(a.months[k]);
      continue;
    }
    out.months.push_back(a.months[k]);
    out.values.push_back(sign * (a.values[k] - it->second));
    lookup.erase(it);
  }
  for (const auto& [month, value] : lookup) missing.push_back(month);
  if (!missing.empty()) {
    std::sort(missing.begin(), missing.end());
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw DataError("misaligned calendars; months present in only one series: " + list);
  }
  return out;
}

}  // namespace

DifferentialSeries compute_ird(const MonthlySeries& base, const MonthlySeries& domestic,
                               IrdSign sign) {
  if (sign == IrdSign::BaseMinusDomestic)
    return {aligned_difference(base, domestic, 1.0), "base-domestic"};
  return {aligned_difference(base, domestic, -1.0), "domestic-base"};
}

DifferentialSeries compute_inflation_differential(const MonthlySeries& domestic,
                                                  const MonthlySeries& reference) {
  return {aligned_difference(domestic, reference, 1.0), "domestic-reference"};
}

Eigen::MatrixXd compute_inflation_differential(const Eigen::MatrixXd& domestic,
                                               const Eigen::RowVectorXd& reference) {
  if (domestic.cols() != reference.size())
    throw DataError("reference series length does not match panel periods");
  return domestic.rowwise() - reference;
}

int regime_code(const std::string& raw) {
  std::string label = trim(raw);
  std::transform(label.begin(), label.end(), label.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (label == "0" || label == "other" || label == "other managed" || label == "managed")
    return 0;
  if (label == "1" || label == "soft peg" || label == "soft-pegged" || label == "soft pegged")
    return 1;
  if (label == "2" || label == "floating" || label == "free floating") return 2;
  throw DataError("unknown exchange-rate regime label '" + raw + "'");
}

}  // namespace gscvol
