#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "gscvol/artifacts.hpp"
#include "gscvol/commands.hpp"
#include "gscvol/config.hpp"
#include "gscvol/error.hpp"
#include "gscvol/svol.hpp"

using namespace gscvol;
using namespace gscvol::cli;
namespace fs = std::filesystem;

namespace {

const std::string kDemo = std::string(GSCVOL_DATA_DIR) + "/demo_panel.csv";

fs::path scratch(const std::string& name) {
  const fs::path dir =
      fs::temp_directory_path() / ("gscvol_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct ToolRun {
  int code = -1;
  std::string out;
  std::string err;
};

// Runs the command-line tool with `args`; `env` is prefixed to the shell command.
ToolRun run_tool(const std::string& args, const std::string& env = "") {
  const fs::path dir = scratch("io");
  const std::string cmd = env + " '" + std::string(GSCVOL_BINARY) + "' " + args + " > '" +
                          (dir / "out").string() + "' 2> '" + (dir / "err").string() + "'";
  const int status = std::system(cmd.c_str());
  ToolRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(dir / "out");
  r.err = slurp(dir / "err");
  return r;
}

std::string gsc_args(const fs::path& out, int reps = 200) {
  return "gsc --input '" + kDemo + "' --out '" + out.string() + "' --bootstrap-reps " +
         std::to_string(reps) + " --threads 1";
}

fs::path write_returns(const fs::path& dir) {
  const auto sim = svol::simulate_sv({-0.5, 0.95, 0.2}, 400, 3);
  std::ofstream out(dir / "returns.csv");
  out << "date,return\n";
  for (int k = 0; k < 400; ++k) {
    const int month = 1 + (k / 21) % 12;
    const int day = 1 + k % 21;
    out << 2019 + k / 252 << "-" << (month < 10 ? "0" : "") << month << "-" << (day < 10 ? "0" : "") << day
        << "," << sim.returns[k] << "\n";
  }
  return dir / "returns.csv";
}

}  // namespace

TEST(Config, SerializeParseRoundTripIsLossless) {
  RunConfig c;
  c.command = "placebo-space";
  c.label = "alt";
  c.input = "/data/panel.csv";
  c.out_dir = "/tmp/out";
  c.schema.unit = "country";
  c.schema.covariates = {"ird", "infl_diff"};
  c.factors = 3;
  c.cv_min_improvement = 0.0;
  c.bootstrap_reps = 500;
  c.seed = 12345678901234ULL;
  c.ci = gsc::CiScheme::Normal;
  c.ci_level = 0.9;
  c.tol = 1.0 / 3.0;
  c.units = {"Iran", "Sri Lanka"};
  c.adoption_dates = {"2018-05", "2012-08"};
  c.true_att = 0.1234567890123;
  c.margin = 0.05;
  c.priors.phi_a = 10.0;
  c.vol_source = "smoothed";
  const std::string text = serialize_config(c);
  std::istringstream in(text);
  const RunConfig back = parse_config(in);
  EXPECT_TRUE(back == c) << text;
  EXPECT_EQ(serialize_config(back), text);
  EXPECT_EQ(*back.true_att, *c.true_att);
  EXPECT_EQ(back.tol, c.tol);
}

TEST(Config, DefaultsRoundTrip) {
  const RunConfig c;
  std::istringstream in(serialize_config(c));
  EXPECT_TRUE(parse_config(in) == c);
  EXPECT_FALSE(c.factors.has_value());
  EXPECT_EQ(c.bootstrap_reps, 1000);
}

TEST(Config, UnknownKeyAndBadValueNameTheField) {
  RunConfig c;
  try {
    c.set("bootstrap_repz", "10");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("bootstrap_repz"), std::string::npos);
  }
  try {
    c.set("seed", "abc");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("seed"), std::string::npos);
  }
  std::istringstream bad("factors = 2\nnot a pair\n");
  EXPECT_THROW(parse_config(bad), ConfigError);
}

TEST(Config, ValidationNamesTheField) {
  RunConfig c;
  c.command = "gsc";
  c.input = kDemo;
  c.out_dir = "out";
  c.bootstrap_reps = 100;
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("bootstrap_reps"), std::string::npos) << e.what();
  }
  c.bootstrap_reps = 0;
  EXPECT_NO_THROW(c.validate());
  c.command = "equivalence";
  EXPECT_THROW(c.validate(), ConfigError);
  c.command = "frobnicate";
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, StemAndOutputDirectory) {
  RunConfig c;
  c.command = "placebo-time";
  EXPECT_EQ(c.stem(), "placebo_time");
  c.label = "nocov";
  EXPECT_EQ(c.stem(), "placebo_time-nocov");
  ::setenv(kOutEnv, "/tmp/somewhere", 1);
  EXPECT_EQ(default_out_dir(), fs::path("/tmp/somewhere"));
  ::unsetenv(kOutEnv);
  EXPECT_EQ(default_out_dir(), fs::path("gscvol_out"));
}

TEST(Tool, HelpAndUsageErrors) {
  EXPECT_EQ(run_tool("--help").code, 0);
  const ToolRun unknown = run_tool("frobnicate --input '" + kDemo + "'");
  EXPECT_EQ(unknown.code, 1);
  EXPECT_NE(unknown.err.find("frobnicate"), std::string::npos) << unknown.err;
  EXPECT_EQ(run_tool("gsc --no-such-flag").code, 1);
  EXPECT_EQ(run_tool("gsc").code, 1);
  const fs::path out = scratch("usage");
  EXPECT_EQ(run_tool("gsc --input /no/such/file.csv --out '" + out.string() + "'").code, 2);
  EXPECT_EQ(run_tool(gsc_args(out, 50)).code, 1);
  EXPECT_EQ(run_tool(gsc_args(out) + " --factors 40").code, 1);
  EXPECT_EQ(run_tool(gsc_args(out) + " --covariates nothere").code, 2);
}

TEST(Tool, FlagsOverrideSetOverrideConfigFile) {
  const fs::path dir = scratch("precedence");
  {
    std::ofstream cfg(dir / "run.cfg");
    cfg << "# comment\nseed = 5\nbootstrap_reps = 300\nfactors = 1\n";
  }
  const std::string base = "gsc --print-config --config '" + (dir / "run.cfg").string() + "'";
  const ToolRun file_only = run_tool(base);
  ASSERT_EQ(file_only.code, 0) << file_only.err;
  EXPECT_NE(file_only.out.find("seed = 5"), std::string::npos) << file_only.out;
  EXPECT_NE(file_only.out.find("factors = 1"), std::string::npos);
  const ToolRun with_set = run_tool(base + " --set seed=6");
  EXPECT_NE(with_set.out.find("seed = 6"), std::string::npos) << with_set.out;
  const ToolRun with_flag = run_tool(base + " --set seed=6 --seed 7");
  EXPECT_NE(with_flag.out.find("seed = 7"), std::string::npos) << with_flag.out;
  EXPECT_NE(with_flag.out.find("bootstrap_reps = 300"), std::string::npos);
  const ToolRun schema = run_tool(base + " --schema unit=country,time=month");
  EXPECT_NE(schema.out.find("unit_column = country"), std::string::npos) << schema.out;
  EXPECT_EQ(run_tool(base + " --set nonsense=1").code, 1);
}

TEST(Tool, OutputDirectoryDefaultsToEnvironment) {
  const fs::path out = scratch("env_out");
  const ToolRun r = run_tool("cv --input '" + kDemo + "' --cv-max 2",
                         "GSCVOL_OUT='" + out.string() + "'");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(out / "cv.json"));
  EXPECT_TRUE(fs::exists(out / "cv.manifest.json"));
}

TEST(Tool, CrossValidationOnDemoPanelSelectsTwo) {
  const fs::path out = scratch("cv");
  const ToolRun r = run_tool("cv --input '" + kDemo + "' --out '" + out.string() + "'");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = read_json(out / "cv.json");
  EXPECT_EQ(doc["cv"]["selected_r"].get<int>(), 2);
  EXPECT_EQ(doc["cv"]["rows"].size(), 6u);
  EXPECT_TRUE(fs::exists(out / "cv_table.csv"));
}

TEST(Tool, GscWritesResultsAndManifest) {
  const fs::path out = scratch("gsc");
  const ToolRun r = run_tool(gsc_args(out));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = read_json(out / "gsc.json");
  const auto& res = doc["result"];
  for (const char* key : {"treated_units", "adoption", "factors", "avg_att", "se", "ci_lower",
                          "ci_upper", "p_value", "beta", "att_path", "individual_effects",
                          "counterfactuals", "cv", "residual_sd"})
    EXPECT_TRUE(res.contains(key)) << key;
  EXPECT_EQ(res["factors"].get<int>(), 2);
  EXPECT_EQ(res["treated_units"].size(), 3u);
  EXPECT_EQ(res["beta"].size(), 3u);
  EXPECT_NEAR(res["avg_att"].get<double>(), 1.0, 0.2);

  const auto manifest = read_json(out / "gsc.manifest.json");
  EXPECT_EQ(manifest["command"], "gsc");
  EXPECT_EQ(manifest["seed"].get<std::uint64_t>(), 1u);
  ASSERT_EQ(manifest["inputs"].size(), 1u);
  EXPECT_EQ(manifest["inputs"][0]["sha256"].get<std::string>(), sha256_file(kDemo));
  ASSERT_FALSE(manifest["artifacts"].empty());
  for (const auto& name : manifest["artifacts"]) {
    const fs::path path = out / name.get<std::string>();
    ASSERT_TRUE(fs::exists(path)) << path;
    if (path.extension() == ".json") EXPECT_NO_THROW(read_json(path));
  }
  EXPECT_TRUE(manifest["config"].contains("bootstrap_reps"));
}

TEST(Tool, RerunFromManifestIsBitIdentical) {
  const fs::path first = scratch("first");
  const fs::path second = scratch("second");
  ASSERT_EQ(run_tool(gsc_args(first) + " --seed 42").code, 0);
  const ToolRun again = run_tool("--manifest '" + (first / "gsc.manifest.json").string() +
                             "' --out '" + second.string() + "'");
  ASSERT_EQ(again.code, 0) << again.err;
  const auto manifest = read_json(first / "gsc.manifest.json");
  for (const auto& name : manifest["artifacts"]) {
    const std::string file = name.get<std::string>();
    EXPECT_EQ(slurp(first / file), slurp(second / file)) << file;
  }
}

TEST(Tool, ManifestWithChangedInputIsRejected) {
  const fs::path dir = scratch("changed");
  fs::copy_file(kDemo, dir / "panel.csv");
  ASSERT_EQ(run_tool("cv --cv-max 1 --input '" + (dir / "panel.csv").string() + "' --out '" +
                     dir.string() + "'")
                .code,
            0);
  std::ofstream(dir / "panel.csv", std::ios::app) << "\n";
  EXPECT_EQ(run_tool("--manifest '" + (dir / "cv.manifest.json").string() + "'").code, 2);
}

TEST(Tool, LabelledRunsShareOutputDirectory) {
  const fs::path out = scratch("labels");
  ASSERT_EQ(run_tool(gsc_args(out, 0)).code, 0);
  ASSERT_EQ(run_tool(gsc_args(out, 0) + " --label nocov --covariates none").code, 0);
  EXPECT_TRUE(fs::exists(out / "gsc.json"));
  EXPECT_TRUE(fs::exists(out / "gsc-nocov.json"));
  EXPECT_EQ(read_json(out / "gsc-nocov.json")["result"]["beta"].size(), 0u);
  ASSERT_EQ(run_tool("report --out '" + out.string() + "'").code, 0);
  EXPECT_NE(slurp(out / "report.md").find("nocov"), std::string::npos);
}

TEST(Tool, FullPipelineReportHasEverySection) {
  const fs::path out = scratch("pipeline");
  const std::string common = " --input '" + kDemo + "' --out '" + out.string() + "' --threads 1";
  ASSERT_EQ(run_tool("gsc" + common + " --bootstrap-reps 200").code, 0);
  ASSERT_EQ(run_tool("per-unit" + common + " --bootstrap-reps 200 --factors 2").code, 0);
  ASSERT_EQ(run_tool("placebo-time" + common + " --bootstrap-reps 200").code, 0);
  ASSERT_EQ(run_tool("placebo-space" + common + " --factors 2").code, 0);
  ASSERT_EQ(run_tool("equivalence" + common + " --bootstrap-reps 200 --factors 2").code, 0);
  const fs::path returns = write_returns(out);
  ASSERT_EQ(run_tool("sv-estimate --input '" + returns.string() + "' --out '" + out.string() +
                     "' --iterations 1500 --burn-in 200 --particles 500")
                .code,
            0);
  ASSERT_EQ(run_tool("sv-aggregate --input '" + (out / "sv_estimate_daily.csv").string() +
                     "' --out '" + out.string() + "' --date-column date")
                .code,
            0);
  const ToolRun report = run_tool("report --out '" + out.string() + "'");
  ASSERT_EQ(report.code, 0) << report.err;
  const std::string md = slurp(out / "report.md");
  for (const char* heading :
       {"## Stochastic volatility", "## Cross-validation", "## Average treatment effect",
        "## Covariate coefficients", "## Per-unit effects", "## In-time placebo",
        "## In-space placebo", "## Equivalence test"}) {
    const auto at = md.find(heading);
    ASSERT_NE(at, std::string::npos) << heading;
    const std::string section = md.substr(at, md.find("\n## ", at + 1) - at);
    EXPECT_EQ(section.find("_Not run._"), std::string::npos) << section;
  }

  const auto sv = read_json(out / "sv_estimate.json");
  for (const char* key : {"mu", "phi", "sigma_eta"}) {
    EXPECT_TRUE(sv["posterior_mean"].contains(key)) << key;
    EXPECT_TRUE(sv["credible_intervals"]["0.90"].contains(key)) << key;
  }
  const auto per_unit = read_json(out / "per_unit.json");
  EXPECT_EQ(per_unit["units"].size(), 3u);
  const auto space = read_json(out / "placebo_space.json");
  EXPECT_EQ(space["placebo"]["entries"].size(), 24u * 3u);
}

TEST(Tool, ReportOnEmptyDirectoryMarksSectionsNotRun) {
  const fs::path out = scratch("empty_report");
  ASSERT_EQ(run_tool("report --out '" + out.string() + "'").code, 0);
  const std::string md = slurp(out / "report.md");
  EXPECT_NE(md.find("_Not run._"), std::string::npos);
  EXPECT_NE(md.find("## Equivalence test"), std::string::npos);
}

TEST(RunSubcommand, MapsErrorsToExitCodes) {
  std::ostringstream err;
  RunConfig c;
  c.input = "/no/such/panel.csv";
  c.out_dir = scratch("codes");
  EXPECT_EQ(run_subcommand("gsc", c, err), kDataError);
  EXPECT_EQ(run_subcommand("not-a-command", c, err), kUsage);
  c.input = kDemo;
  c.bootstrap_reps = 10;
  EXPECT_EQ(run_subcommand("gsc", c, err), kUsage);
  EXPECT_NE(err.str().find("bootstrap_reps"), std::string::npos) << err.str();
}
