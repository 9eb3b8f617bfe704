// Copyright 2026 The qmci-lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
};

Result run(const std::string& args, const std::string& env = "") {
  std::string cmd = env + " " + std::string(QMCI_LAB_PATH) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  std::string out;
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof(buf), p)) out.append(buf, n);
  int st = pclose(p);
  return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, out};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("qmci_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path config(const std::string& name, const std::string& body) {
    fs::path p = dir_ / name;
    std::ofstream(p) << body;
    return p;
  }

  fs::path dir_;
};

TEST_F(CliTest, UnknownSubcommandIsConfigError) {
  auto r = run("frobnicate --config x.json");
  EXPECT_EQ(r.code, 1);
}

TEST_F(CliTest, MissingConfigFile) {
  auto out = dir_ / "out";
  auto r = run("gate-budget --config " + (dir_ / "nope.json").string() + " --output " + out.string());
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(fs::exists(out));
}

TEST_F(CliTest, InvalidConfigWritesNothing) {
  auto out = dir_ / "out";
  for (std::string body : {"{not json", R"({"qubits": 0})", R"({"gammas": "x"})", R"({"typo_key": 1})",
                           R"({"distribution": {"type": "gaussian", "sigma": -1}})"}) {
    auto cfg = config("bad.json", body);
    auto r = run("audit-errors --config " + cfg.string() + " --output " + out.string());
    EXPECT_EQ(r.code, 1) << body;
    EXPECT_NE(r.out.find("config error"), std::string::npos) << r.out;
    EXPECT_FALSE(fs::exists(out)) << body;
  }
}

TEST_F(CliTest, BadModeIsConfigError) {
  auto cfg = config("mv.json", "{}");
  auto r = run("sbo-mean-var --mode turbo --config " + cfg.string() + " --output " + (dir_ / "o").string());
  EXPECT_EQ(r.code, 1);
}

TEST_F(CliTest, GateBudgetTable) {
  auto cfg = config("gb.json", "{}");
  auto out = dir_ / "gb";
  auto r = run("gate-budget --config " + cfg.string() + " --output " + out.string());
  ASSERT_EQ(r.code, 0) << r.out;
  std::string csv = slurp(out / "gate_budget.csv");
  EXPECT_NE(csv.find("current,16,3490,4"), std::string::npos) << csv;
  EXPECT_NE(csv.find("current,32,6914,8"), std::string::npos);
  EXPECT_NE(csv.find("current,64,13762,16"), std::string::npos);
  EXPECT_NE(csv.find("future,64,13762,0"), std::string::npos);
}

TEST_F(CliTest, ManifestRecordsSeedAndHashes) {
  auto cfg = config("a.json", R"({"seed": 9, "sweep": {"per_cell": 4}})");
  auto out = dir_ / "a";
  ASSERT_EQ(run("audit-errors --config " + cfg.string() + " --output " + out.string()).code, 0);
  auto m = nlohmann::json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(m["subcommand"], "audit-errors");
  EXPECT_EQ(m["seed"], 9);
  EXPECT_EQ(m["config"]["seed"], 9);
  EXPECT_EQ(m["outputs"].size(), 3u);
  EXPECT_EQ(m["config_fnv1a64"].get<std::string>().size(), 16u);
  EXPECT_TRUE(fs::exists(out / "errors.csv"));
  EXPECT_TRUE(fs::exists(out / "sweep.csv"));
}

TEST_F(CliTest, SeedPrecedence) {
  auto cfg = config("v.json", R"({"alphas": [0.5], "samples_per_call": 200})");
  auto seed_of = [&](const std::string& extra, const std::string& env) {
    auto out = dir_ / "s";
    fs::remove_all(out);
    run("estimate-var --config " + cfg.string() + " --output " + out.string() + " " + extra, env);
    return nlohmann::json::parse(slurp(out / "manifest.json"))["seed"].get<std::uint64_t>();
  };
  EXPECT_EQ(seed_of("", "QMCI_SEED="), 42u);
  EXPECT_EQ(seed_of("", "QMCI_SEED=17"), 17u);
  EXPECT_EQ(seed_of("--seed 5", "QMCI_SEED=17"), 5u);
  EXPECT_EQ(run("estimate-var --config " + cfg.string() + " --output " + (dir_ / "x").string(),
                "QMCI_SEED=abc")
                .code,
            1);
}

TEST_F(CliTest, ReproducibleOutput) {
  auto cfg = config("c.json", R"({"alphas": [0.5, 0.6915], "samples": 2000})");
  auto a = dir_ / "a", b = dir_ / "b", c = dir_ / "c";
  ASSERT_EQ(run("estimate-cvar --config " + cfg.string() + " --replicates 6 --seed 3 --output " + a.string()).code, 0);
  ASSERT_EQ(run("estimate-cvar --config " + cfg.string() + " --replicates 6 --seed 3 --workers 1 --output " +
                b.string())
                .code,
            0);
  ASSERT_EQ(run("estimate-cvar --config " + cfg.string() + " --replicates 6 --seed 4 --output " + c.string()).code, 0);
  EXPECT_EQ(slurp(a / "cvar.csv"), slurp(b / "cvar.csv"));
  EXPECT_NE(slurp(a / "cvar.csv"), slurp(c / "cvar.csv"));
  EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));
}

TEST_F(CliTest, ReplicateRowsIndependentOfCount) {
  auto cfg = config("c.json", R"({"alphas": [0.5], "samples": 1000})");
  auto a = dir_ / "a", b = dir_ / "b";
  ASSERT_EQ(run("estimate-cvar --config " + cfg.string() + " --replicates 3 --output " + a.string()).code, 0);
  ASSERT_EQ(run("estimate-cvar --config " + cfg.string() + " --replicates 5 --output " + b.string()).code, 0);
  std::string sa = slurp(a / "cvar.csv"), sb = slurp(b / "cvar.csv");
  EXPECT_EQ(sb.substr(0, sa.size()), sa);
}

TEST_F(CliTest, AnalyticalVarTrace) {
  auto cfg = config("v.json", R"({"alphas": [0.5], "epsilon": 1e-4})");
  auto out = dir_ / "v";
  ASSERT_EQ(run("estimate-var --mode analytical --config " + cfg.string() + " --output " + out.string()).code, 0);
  std::string trace = slurp(out / "trace.csv");
  long rows = std::count(trace.begin(), trace.end(), '\n') - 1;
  EXPECT_EQ(rows, 12);  // ceil(log2(0.3 / 1e-4))
  std::string var = slurp(out / "var.csv");
  EXPECT_NE(var.find("0.5,0,0.1"), std::string::npos) << var;
}

TEST_F(CliTest, MeanCvarAnalytical) {
  auto cfg = config("p.json", R"({"assets": [{"mu": 0.1, "sigma": 0.05}, {"mu": 0.1, "sigma": 0.1}]})");
  auto out = dir_ / "p";
  auto r = run("sbo-mean-cvar --mode analytical --replicates 2 --config " + cfg.string() + " --output " + out.string());
  ASSERT_EQ(r.code, 0) << r.out;
  auto m = nlohmann::json::parse(slurp(out / "manifest.json"));
  EXPECT_NEAR(m["summary"]["w1_mean"].get<double>(), 0.8, 1e-6);
}

}  // namespace
