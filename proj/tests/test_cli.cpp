#include "ringform/cli.hpp"

#include "paths.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace ringform;
using namespace ringform::cli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ringform_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json triangle_json() {
  return json::parse(R"({
    "mode": "pipeline",
    "topology": {"n_total": 7, "vertex_set": [0, 2, 5]},
    "r_star": [[1, -2], [2, 2], [-3, 0]],
    "estimation": {"alpha": 0.1, "dt": 1.0},
    "formation": {"alpha": 0.3, "dt": 0.2, "horizon": 100.0},
    "seed": 3, "initial_box": 2.0
  })");
}

// Runs the CLI binary; returns its exit status.
int run_cli(const std::string& args) {
  const int rc = std::system((test_paths::cli() + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string config_error_path(const json& j) {
  try {
    validate(parse_config(j));
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "";
}

}  // namespace

TEST(Config, DefaultsAndRoundTrip) {
  const RunConfig c = parse_config(triangle_json());
  validate(c);
  EXPECT_EQ(c.mode, Mode::Pipeline);
  EXPECT_EQ(c.estimation.window, 50u);
  EXPECT_EQ(c.formation.sigma, 1);
  EXPECT_EQ(to_json(parse_config(to_json(c))), to_json(c));
}

TEST(Config, ErrorsNameTheField) {
  auto j = triangle_json();
  j["formation"]["sigmaa"] = 2;
  EXPECT_EQ(config_error_path(j), "/formation/sigmaa");

  j = triangle_json();
  j["formation"]["sigma"] = 3;
  EXPECT_EQ(config_error_path(j), "/formation/sigma");

  j = triangle_json();
  j["r_star"][0][0] = 1.5;
  EXPECT_EQ(config_error_path(j), "/r_star");

  j = triangle_json();
  j["topology"]["vertex_set"] = {0, 9, 5};
  EXPECT_EQ(config_error_path(j), "/topology/vertex_set");

  j = triangle_json();
  j["estimation"]["alpha"] = "fast";
  EXPECT_EQ(config_error_path(j), "/estimation/alpha");

  j = triangle_json();
  j["estimation"]["strategy"] = "S3";
  EXPECT_EQ(config_error_path(j), "/estimation/strategy");

  j = triangle_json();
  j["seed"] = -4;
  EXPECT_EQ(config_error_path(j), "/seed");

  j = triangle_json();
  j.erase("mode");
  EXPECT_EQ(config_error_path(j), "/mode");
}

TEST(Config, SubcommandMustAgreeWithMode) {
  EXPECT_THROW(parse_config(triangle_json(), Mode::Sweep), ConfigError);
  auto j = triangle_json();
  j.erase("mode");
  EXPECT_EQ(parse_config(j, Mode::Form).mode, Mode::Form);
}

TEST(Execute, TrianglePipelineWritesAllFiles) {
  auto c = parse_config(triangle_json());
  c.output_dir = scratch("tri").string();
  c.stride = 10;
  const auto out = execute(c);
  EXPECT_EQ(out.exit_code, kOk) << out.message;
  for (const char* f : {"estimate.csv", "trace.csv", "errors.csv", "manifest.json", "resolved_config.json"})
    EXPECT_TRUE(fs::exists(fs::path(c.output_dir) / f)) << f;
  const std::string prefix = std::string(kTraceHeader) + "\n0,0,0,";
  EXPECT_EQ(slurp(fs::path(c.output_dir) / "trace.csv").substr(0, prefix.size()), prefix);
  const auto m = json::parse(slurp(fs::path(c.output_dir) / "manifest.json"));
  EXPECT_EQ(m["seed"], 3);
  EXPECT_EQ(m["resolved_config"], to_json(c));
}

TEST(Execute, ShortHorizonReportsNonConvergence) {
  auto j = triangle_json();
  j["formation"]["horizon"] = 1.0;
  auto c = parse_config(j);
  c.output_dir = scratch("short").string();
  EXPECT_EQ(execute(c).exit_code, kNotConverged);
}

TEST(Execute, UnstableFormationReportsDivergence) {
  auto j = triangle_json();
  j["formation"]["alpha"] = 40.0;
  j["formation"]["dt"] = 1.0;
  j["formation"]["horizon"] = 100000.0;
  auto c = parse_config(j);
  c.output_dir = scratch("div").string();
  EXPECT_EQ(execute(c).exit_code, kDiverged);
}

TEST(Execute, SpectralReport) {
  auto c = parse_config(json::parse(R"({"mode": "spectral"})"));
  c.output_dir = scratch("spec").string();
  ASSERT_EQ(execute(c).exit_code, kOk);
  const auto s = json::parse(slurp(fs::path(c.output_dir) / "spectral.json"));
  EXPECT_EQ(s["n_prime"], 19);
  EXPECT_NEAR(s["bound_s1"].get<double>(), 0.012088, 1e-6);
  EXPECT_LT(s["rho_A"].get<double>(), 1.0);
  EXPECT_TRUE(s["satisfies_s1"].get<bool>());
}

TEST(Execute, SingleChainEstimate) {
  auto c = parse_config(json::parse(R"({"mode": "estimate", "estimation": {"n_prime": 4, "alpha": 0.5}})"));
  validate(c);
  c.output_dir = scratch("est").string();
  ASSERT_EQ(execute(c).exit_code, kOk);
  const std::string csv = slurp(fs::path(c.output_dir) / "estimate.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kEstimateHeader);
}

TEST(Binary, ExitCodes) {
  const fs::path dir = scratch("bin");
  const fs::path bad = dir / "bad.json";
  std::ofstream(bad) << R"({"mode": "spectral", "bogus": 1})";
  EXPECT_EQ(run_cli("spectral -c " + bad.string() + " -o " + (dir / "o1").string()), kConfigError);
  const fs::path good = dir / "good.json";
  std::ofstream(good) << R"({"mode": "spectral"})";
  EXPECT_EQ(run_cli("spectral -c " + good.string() + " -o " + (dir / "o2").string()), kOk);
  EXPECT_TRUE(fs::exists(dir / "o2" / "spectral.json"));
  EXPECT_EQ(run_cli("form -c " + good.string()), kConfigError);  // mode mismatch
  EXPECT_EQ(run_cli("nonsense"), kConfigError);
}

TEST(Binary, ShippedConfigsParse) {
  const std::string dir = test_paths::configs();
  std::size_t count = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    EXPECT_NO_THROW(load_config(entry.path().string())) << entry.path();
    ++count;
  }
  EXPECT_GE(count, 5u);
}
