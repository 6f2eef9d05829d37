#include "gscvol/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>

#include "gscvol/error.hpp"
#include "gscvol/text.hpp"

namespace gscvol::cli {

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& expected) {
  throw ConfigError("invalid value for '" + key + "': '" + value + "' (expected " + expected + ")");
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  Int value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    bad_value(key, raw, "an integer");
  return value;
}

double parse_real(const std::string& key, const std::string& raw) {
  const auto v = parse_double(raw);
  if (!v) bad_value(key, raw, "a finite number");
  return *v;
}

bool is_auto(const std::string& raw) {
  const std::string s = trim(raw);
  return s.empty() || s == "auto";
}

std::vector<std::string> parse_list(const std::string& raw) {
  std::vector<std::string> out;
  if (trim(raw).empty()) return out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t k = 0; k < items.size(); ++k) out += (k ? "," : "") + items[k];
  return out;
}

std::string real_or_auto(const std::optional<double>& v) {
  return v ? format_double(*v) : "auto";
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Table rows for plain integer, real and text members.
#define GSCVOL_INT_FIELD(name)                                                \
  {                                                                           \
    #name, {                                                                  \
      [](RunConfig& c, const std::string& v) { c.name = parse_int<int>(#name, v); }, \
          [](const RunConfig& c) { return std::to_string(c.name); }           \
    }                                                                         \
  }
#define GSCVOL_REAL_FIELD(key, member)                                        \
  {                                                                           \
    key, {                                                                    \
      [](RunConfig& c, const std::string& v) { c.member = parse_real(key, v); }, \
          [](const RunConfig& c) { return format_double(c.member); }          \
    }                                                                         \
  }
#define GSCVOL_TEXT_FIELD(key, member)                                        \
  {                                                                           \
    key, {                                                                    \
      [](RunConfig& c, const std::string& v) { c.member = trim(v); },         \
          [](const RunConfig& c) { return c.member; }                         \
    }                                                                         \
  }

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      GSCVOL_TEXT_FIELD("command", command),
      GSCVOL_TEXT_FIELD("label", label),
      GSCVOL_TEXT_FIELD("input", input),
      {"out",
       {[](RunConfig& c, const std::string& v) { c.out_dir = trim(v); },
        [](const RunConfig& c) { return c.out_dir.string(); }}},
      GSCVOL_TEXT_FIELD("unit_column", schema.unit),
      GSCVOL_TEXT_FIELD("time_column", schema.time),
      GSCVOL_TEXT_FIELD("outcome_column", schema.outcome),
      GSCVOL_TEXT_FIELD("treatment_column", schema.treatment),
      {"covariates",
       {[](RunConfig& c, const std::string& v) { c.schema.covariates = parse_list(v); },
        [](const RunConfig& c) { return join(c.schema.covariates); }}},
      {"factors",
       {[](RunConfig& c, const std::string& v) {
          if (is_auto(v)) {
            c.factors.reset();
          } else {
            c.factors = parse_int<int>("factors", v);
          }
        },
        [](const RunConfig& c) { return c.factors ? std::to_string(*c.factors) : "auto"; }}},
      GSCVOL_INT_FIELD(cv_min),
      GSCVOL_INT_FIELD(cv_max),
      GSCVOL_REAL_FIELD("cv_min_improvement", cv_min_improvement),
      GSCVOL_INT_FIELD(bootstrap_reps),
      {"seed",
       {[](RunConfig& c, const std::string& v) { c.seed = parse_int<std::uint64_t>("seed", v); },
        [](const RunConfig& c) { return std::to_string(c.seed); }}},
      {"ci",
       {[](RunConfig& c, const std::string& v) {
          const std::string s = trim(v);
          if (s == "percentile") {
            c.ci = gsc::CiScheme::Percentile;
          } else if (s == "normal") {
            c.ci = gsc::CiScheme::Normal;
          } else {
            bad_value("ci", v, "percentile or normal");
          }
        },
        [](const RunConfig& c) {
          return std::string(c.ci == gsc::CiScheme::Percentile ? "percentile" : "normal");
        }}},
      GSCVOL_REAL_FIELD("ci_level", ci_level),
      GSCVOL_REAL_FIELD("tol", tol),
      GSCVOL_INT_FIELD(max_iter),
      GSCVOL_INT_FIELD(threads),
      {"units",
       {[](RunConfig& c, const std::string& v) { c.units = parse_list(v); },
        [](const RunConfig& c) { return join(c.units); }}},
      GSCVOL_TEXT_FIELD("placebo_start", placebo_start),
      GSCVOL_INT_FIELD(placebo_shift),
      {"adoption_dates",
       {[](RunConfig& c, const std::string& v) { c.adoption_dates = parse_list(v); },
        [](const RunConfig& c) { return join(c.adoption_dates); }}},
      {"true_att",
       {[](RunConfig& c, const std::string& v) {
          if (is_auto(v)) {
            c.true_att.reset();
          } else {
            c.true_att = parse_real("true_att", v);
          }
        },
        [](const RunConfig& c) { return real_or_auto(c.true_att); }}},
      {"margin",
       {[](RunConfig& c, const std::string& v) {
          if (is_auto(v)) {
            c.margin.reset();
          } else {
            c.margin = parse_real("margin", v);
          }
        },
        [](const RunConfig& c) { return real_or_auto(c.margin); }}},
      GSCVOL_REAL_FIELD("margin_factor", margin_factor),
      GSCVOL_TEXT_FIELD("date_column", date_column),
      GSCVOL_TEXT_FIELD("value_column", value_column),
      GSCVOL_TEXT_FIELD("series", series),
      GSCVOL_INT_FIELD(iterations),
      GSCVOL_INT_FIELD(burn_in),
      GSCVOL_INT_FIELD(particles),
      GSCVOL_REAL_FIELD("offset_factor", offset_factor),
      GSCVOL_REAL_FIELD("prior_mu_mean", priors.mu_mean),
      GSCVOL_REAL_FIELD("prior_mu_sd", priors.mu_sd),
      GSCVOL_REAL_FIELD("prior_phi_a", priors.phi_a),
      GSCVOL_REAL_FIELD("prior_phi_b", priors.phi_b),
      GSCVOL_REAL_FIELD("prior_sigma2_shape", priors.sigma2_shape),
      GSCVOL_REAL_FIELD("prior_sigma2_scale", priors.sigma2_scale),
      GSCVOL_TEXT_FIELD("vol_source", vol_source),
  };
  return table;
}

#undef GSCVOL_INT_FIELD
#undef GSCVOL_REAL_FIELD
#undef GSCVOL_TEXT_FIELD

bool needs_panel(const std::string& command) {
  return command != "sv-estimate" && command != "sv-aggregate" && command != "report";
}

}  // namespace

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = {
      "sv-estimate", "sv-aggregate", "gsc",         "cv",    "per-unit",
      "placebo-time", "placebo-space", "equivalence", "report"};
  return names;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [key, field] : fields()) keys.push_back(key);
  return keys;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& table = fields();
  const auto it = std::find_if(table.begin(), table.end(),
                               [&](const auto& entry) { return entry.first == key; });
  if (it == table.end()) throw ConfigError("unknown configuration key '" + key + "'");
  it->second.set(*this, value);
}

std::vector<std::pair<std::string, std::string>> RunConfig::to_pairs() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [key, field] : fields()) out.emplace_back(key, field.get(*this));
  return out;
}

bool RunConfig::operator==(const RunConfig& other) const { return to_pairs() == other.to_pairs(); }

void RunConfig::validate() const {
  const auto& names = subcommands();
  if (std::find(names.begin(), names.end(), command) == names.end())
    throw ConfigError("unknown subcommand '" + command + "'");
  if (command != "report" && input.empty())
    throw ConfigError("'input' is required for " + command);
  if (out_dir.empty()) throw ConfigError("'out' must not be empty");
  if (label.find_first_of("/\\ ") != std::string::npos)
    throw ConfigError("'label' must not contain path separators or spaces");

  if (needs_panel(command)) {
    if (factors && *factors < 0) throw ConfigError("'factors' must be auto or a non-negative integer");
    if (cv_min < 0 || cv_max < cv_min)
      throw ConfigError("'cv_min'/'cv_max' must satisfy 0 <= cv_min <= cv_max");
    if (!(cv_min_improvement >= 0.0)) throw ConfigError("'cv_min_improvement' must be non-negative");
    if (bootstrap_reps != 0 && bootstrap_reps < 200)
      throw ConfigError("'bootstrap_reps' must be 0 (no inference) or at least 200");
    if (command == "equivalence" && bootstrap_reps == 0)
      throw ConfigError("'bootstrap_reps' must be at least 200 for the equivalence test");
    if (!(ci_level > 0.0 && ci_level < 1.0)) throw ConfigError("'ci_level' must lie in (0, 1)");
    if (!(tol > 0.0)) throw ConfigError("'tol' must be positive");
    if (max_iter < 1) throw ConfigError("'max_iter' must be positive");
    if (threads < 0) throw ConfigError("'threads' must be non-negative");
    if (placebo_shift < 1) throw ConfigError("'placebo_shift' must be positive");
    if (margin && *margin < 0.0) throw ConfigError("'margin' must be non-negative");
    if (!(margin_factor >= 0.0)) throw ConfigError("'margin_factor' must be non-negative");
    if (!placebo_start.empty() && !normalize_month(placebo_start))
      throw ConfigError("'placebo_start' must be a YYYY-MM month");
    for (const auto& date : adoption_dates)
      if (!normalize_month(date)) throw ConfigError("'adoption_dates' entry '" + date + "' is not YYYY-MM");
  }
  if (command == "sv-estimate") {
    if (series != "returns" && series != "prices")
      throw ConfigError("'series' must be returns or prices");
    sv_config().check();
    if (particles < 100) throw ConfigError("'particles' must be at least 100");
  }
  if (command == "sv-estimate" || command == "sv-aggregate") {
    if (vol_source != "filtered" && vol_source != "smoothed")
      throw ConfigError("'vol_source' must be filtered or smoothed");
    if (date_column.empty()) throw ConfigError("'date_column' must not be empty");
  }
}

bool RunConfig::no_covariates() const {
  return schema.covariates.size() == 1 && schema.covariates.front() == "none";
}

std::string RunConfig::stem() const {
  std::string s = command;
  std::replace(s.begin(), s.end(), '-', '_');
  return label.empty() ? s : s + "-" + label;
}

gsc::GscConfig RunConfig::gsc_config() const {
  gsc::GscConfig c;
  c.factors = factors;
  c.cv = {cv_min, cv_max, cv_min_improvement};
  if (!no_covariates()) c.covariates = schema.covariates;
  c.bootstrap_reps = bootstrap_reps;
  c.seed = seed;
  c.ci = ci;
  c.ci_level = ci_level;
  c.ife.tol = tol;
  c.ife.max_iter = max_iter;
  c.threads = threads;
  return c;
}

svol::SvConfig RunConfig::sv_config() const {
  svol::SvConfig c;
  c.iterations = iterations;
  c.burn_in = burn_in;
  c.priors = priors;
  c.seed = seed;
  c.offset_factor = offset_factor;
  return c;
}

RunConfig parse_config(std::istream& in) {
  RunConfig config;
  config.out_dir = default_out_dir();
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
    config.set(trim(text.substr(0, eq)), trim(text.substr(eq + 1)));
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_config(in);
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  for (const auto& [key, value] : config.to_pairs()) out += key + " = " + value + "\n";
  return out;
}

std::filesystem::path default_out_dir() {
  const char* env = std::getenv(kOutEnv);
  return env && *env ? std::filesystem::path(env) : std::filesystem::path("gscvol_out");
}

}  // namespace gscvol::cli
