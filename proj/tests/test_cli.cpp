#include <gtest/gtest.h>
#include <json.hpp>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string output;
};

// Runs the CLI with stderr folded into stdout.
Outcome cli(const std::string& args) {
  const std::string cmd = std::string(TRDDPC_CLI_PATH) + " " + args + " 2>&1";
  Outcome o;
  FILE* p = popen(cmd.c_str(), "r");
  if (p == nullptr) return o;
  std::array<char, 4096> buf{};
  while (fgets(buf.data(), buf.size(), p) != nullptr) o.output += buf.data();
  const int status = pclose(p);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

std::string scenario(const std::string& name) { return std::string(TRDDPC_SOURCE_DIR) + "/scenarios/" + name; }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("trddpc_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

nlohmann::json load(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

// Scalar scenario variant written next to the outputs.
fs::path variant(const fs::path& dir, const nlohmann::json& patch) {
  nlohmann::json j = load(scenario("scalar.json"));
  j.merge_patch(patch);
  fs::create_directories(dir);
  const fs::path p = dir / "scenario.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

}  // namespace

TEST(Cli, MissingSubcommandIsUsageError) {
  const Outcome o = cli("");
  EXPECT_EQ(o.code, 2);
}

TEST(Cli, MissingConfigFileIsIoError) {
  const fs::path d = scratch("io");
  const Outcome o = cli("run --config " + (d / "absent.json").string() + " --out " + d.string());
  EXPECT_EQ(o.code, 4);
  EXPECT_NE(o.output.find("io-error"), std::string::npos);
}

TEST(Cli, ZeroExcitationSetFailsPersistencyOfExcitation) {
  const fs::path d = scratch("v0");
  const fs::path cfg = variant(d, {{"W", {{"box", {0.0}}}}, {"data", {{"v_fraction", 0.0}}}});
  const Outcome o = cli("collect --config " + cfg.string() + " --out " + d.string());
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.output.find("persistency-of-excitation"), std::string::npos) << o.output;
}

TEST(Cli, CollectIsIdempotent) {
  const fs::path a = scratch("collect_a"), b = scratch("collect_b");
  ASSERT_EQ(cli("collect --config " + scenario("scalar.json") + " --out " + a.string()).code, 0);
  ASSERT_EQ(cli("collect --config " + scenario("scalar.json") + " --out " + b.string()).code, 0);
  const std::string ta = slurp(a / "trajectory.csv");
  EXPECT_FALSE(ta.empty());
  EXPECT_EQ(ta, slurp(b / "trajectory.csv"));
  EXPECT_EQ(slurp(a / "collect.json"), slurp(b / "collect.json"));
  EXPECT_TRUE(load(a / "collect.json")["coverage_feasible"].get<bool>());
}

TEST(Cli, NoiseFreeDesignHasTrivialTube) {
  const fs::path d = scratch("clean");
  const fs::path cfg = variant(d, {{"W", {{"box", {0.0}}}}});
  const Outcome o = cli("design --config " + cfg.string() + " --out " + d.string());
  ASSERT_EQ(o.code, 0) << o.output;
  const nlohmann::json art = load(d / "design.json");
  // E = {0} and Z = X = [-2, 2].
  for (const auto& v : art["tube"]["E"]["vertices"]) EXPECT_EQ(v[0].get<double>(), 0.0);
  double lo = 0.0, hi = 0.0;
  for (const auto& v : art["tube"]["Z"]["vertices"]) {
    lo = std::min(lo, v[0].get<double>());
    hi = std::max(hi, v[0].get<double>());
  }
  EXPECT_DOUBLE_EQ(lo, -2.0);
  EXPECT_DOUBLE_EQ(hi, 2.0);
}

TEST(Cli, LargeNoiseNamesTheViolatedAssumption) {
  const fs::path d = scratch("noisy");
  const Outcome o = cli("design --config " + scenario("flight.json") + " --noise-scale 10 --out " + d.string());
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.output.find("tightened-set-empty"), std::string::npos) << o.output;
}

TEST(Cli, DesignCheckAndRunChain) {
  const fs::path d = scratch("chain");
  ASSERT_EQ(cli("collect --config " + scenario("scalar.json") + " --out " + d.string()).code, 0);
  ASSERT_EQ(cli("design --config " + scenario("scalar.json") + " --trajectory " + (d / "trajectory.csv").string() +
                " --out " + d.string())
                .code,
            0);
  const Outcome chk = cli("check-assumptions --trajectory " + (d / "trajectory.csv").string() + " --design " +
                          (d / "design.json").string() + " --out " + d.string());
  ASSERT_EQ(chk.code, 0) << chk.output;
  const nlohmann::json rep = load(d / "assumptions.json");
  EXPECT_TRUE(rep["pe"].get<bool>());
  EXPECT_TRUE(rep["tail_coverage"].get<bool>());
  EXPECT_TRUE(rep["tail_deviation"].get<bool>());
  double hs = 0.0;
  for (const auto& x : rep["h"]) hs += x.get<double>();
  EXPECT_NEAR(hs, 1.0, 1e-9);

  const fs::path r = d / "run";
  const Outcome run = cli("run --config " + scenario("scalar.json") + " --design " + (d / "design.json").string() +
                          " --seeds 5 --out " + r.string());
  ASSERT_EQ(run.code, 0) << run.output;
  int records = 0;
  for (const auto& e : fs::directory_iterator(r)) {
    const std::string n = e.path().filename().string();
    records += n.rfind("record_", 0) == 0 ? 1 : 0;
  }
  EXPECT_EQ(records, 5);
  const nlohmann::json sum = load(r / "summary.json");
  EXPECT_EQ(sum["aggregate"]["runs"].get<int>(), 5);
  EXPECT_EQ(sum["aggregate"]["failed_audits"].get<int>(), 0);
  EXPECT_EQ(sum["records"].size(), 5u);
  // Per-step log: one JSON object per step with the documented keys.
  std::ifstream log(r / "steps_1.jsonl");
  std::string line;
  ASSERT_TRUE(std::getline(log, line));
  const nlohmann::json step = nlohmann::json::parse(line);
  for (const char* key : {"k", "xhat", "u", "z_star", "v_star", "objective", "margins", "status"}) {
    EXPECT_TRUE(step.contains(key)) << key;
  }
}

TEST(Cli, SeedListSyntax) {
  const fs::path d = scratch("seeds");
  const Outcome o = cli("run --config " + scenario("scalar.json") + " --seeds 4,9 --out " + d.string());
  ASSERT_EQ(o.code, 0) << o.output;
  EXPECT_TRUE(fs::exists(d / "record_4.csv"));
  EXPECT_TRUE(fs::exists(d / "record_9.csv"));
  EXPECT_FALSE(fs::exists(d / "record_1.csv"));
  EXPECT_EQ(cli("run --config " + scenario("scalar.json") + " --seeds x --out " + d.string()).code, 2);
}

TEST(Cli, CompareEmitsSummaryTable) {
  const fs::path d = scratch("compare");
  const Outcome o = cli("compare-baseline --config " + scenario("scalar.json") + " --seeds 3 --out " + d.string());
  ASSERT_EQ(o.code, 0) << o.output;
  const nlohmann::json rep = load(d / "compare.json");
  EXPECT_EQ(rep["paired_runs"].get<int>(), 3);
  EXPECT_TRUE(rep["max_admissible_noise"].is_null());
  const std::string csv = slurp(d / "compare.csv");
  EXPECT_EQ(csv.rfind("controller,mean_total_cost,mean_solve_seconds,max_admissible_noise,relative_cost_gap", 0), 0u);
  EXPECT_NE(csv.find("\nbaseline,"), std::string::npos);
}
