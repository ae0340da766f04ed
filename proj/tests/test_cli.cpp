// End-to-end runs of the lqgtp binary: exit codes, outputs, reproducibility.

#include <json.hpp>

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lqgtp_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int lqgtp(const std::string& args, const std::string& env = {}) {
  const std::string cmd = env + (env.empty() ? "" : " ") + std::string(LQGTP_BIN) + " " + args + " > /dev/null 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

}  // namespace

TEST(Cli, CheckFixtureFromEmittedSpec) {
  const auto dir = scratch("check");
  ASSERT_EQ(lqgtp("example --example fixture-a --out " + dir.string()), 0);
  ASSERT_TRUE(fs::exists(dir / "spec.json"));
  EXPECT_EQ(lqgtp("check --spec " + (dir / "spec.json").string() + " --out " + dir.string()), 0);
  const auto rep = nlohmann::json::parse(slurp(dir / "assumptions.json"));
  EXPECT_TRUE(rep.contains("records"));
}

TEST(Cli, NegativeQFailsCheck) {
  const auto dir = scratch("negq");
  ASSERT_EQ(lqgtp("example --example fixture-a --out " + dir.string()), 0);
  auto spec = nlohmann::json::parse(slurp(dir / "spec.json"));
  spec["cost"]["Qblocks"][0][0][0] = nlohmann::json::array({nlohmann::json::array({-1.0})});
  spit(dir / "bad.json", spec.dump());
  EXPECT_EQ(lqgtp("check --spec " + (dir / "bad.json").string() + " --out " + dir.string()), 1);
  EXPECT_TRUE(fs::exists(dir / "assumptions.json"));
  EXPECT_EQ(lqgtp("verify --spec " + (dir / "bad.json").string() + " --out " + dir.string()), 1);
}

TEST(Cli, ConfigErrorsExitTwo) {
  const auto dir = scratch("cfg");
  spit(dir / "broken.json", "{\"N\": 2, ");
  EXPECT_EQ(lqgtp("check --spec " + (dir / "broken.json").string() + " --out " + dir.string()), 2);
  EXPECT_EQ(lqgtp("check --spec " + (dir / "missing.json").string() + " --out " + dir.string()), 2);
  EXPECT_EQ(lqgtp("solve-finite --example fixture-a --T -1 --out " + dir.string()), 2);
  EXPECT_EQ(lqgtp("solve-finite --example fixture-a --T 1 --K 4 --out " + dir.string()), 2);
  EXPECT_EQ(lqgtp("check --example nope --out " + dir.string()), 2);
  EXPECT_EQ(lqgtp("check --example fixture-a --bogus-flag"), 2);
  EXPECT_EQ(lqgtp("frobnicate --example fixture-a"), 2);
  EXPECT_EQ(lqgtp("--help"), 0);
}

TEST(Cli, SolveErgodicValue) {
  const auto dir = scratch("erg");
  ASSERT_EQ(lqgtp("solve-ergodic --example fixture-a --out " + dir.string()), 0);
  const auto j = nlohmann::json::parse(slurp(dir / "ergodic.json"));
  EXPECT_NEAR(j["players"][0]["c"].get<double>(), 0.383883, 5e-7);
  EXPECT_NEAR(j["players"][1]["c"].get<double>(), 0.383883, 5e-7);
}

TEST(Cli, SolveFiniteWritesInvariants) {
  const auto dir = scratch("fin");
  ASSERT_EQ(lqgtp("solve-finite --example fixture-a --T 10 --K 10000 --out " + dir.string()), 0);
  std::ifstream in(dir / "finite.csv");
  std::string header, line, last;
  std::getline(in, header);
  std::size_t rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) {
      last = line;
      ++rows;
    }
  EXPECT_EQ(rows, 10001u);
  EXPECT_EQ(last.substr(0, last.find(',')), "10");
  EXPECT_TRUE(fs::exists(dir / "finite.json"));
}

TEST(Cli, OutputsReproducibleAndEnvDirectory) {
  const auto a = scratch("repro_a"), b = scratch("repro_b"), env = scratch("repro_env");
  const std::string sim = "simulate --example symmetric --params B=0.1 xbar=1 --T 2 --paths 300 --seed 9";
  ASSERT_EQ(lqgtp(sim + " --out " + a.string()), 0);
  ASSERT_EQ(lqgtp(sim, "LQGTP_OUT=" + b.string()), 0);
  EXPECT_EQ(slurp(a / "simulation.csv"), slurp(b / "simulation.csv"));
  EXPECT_FALSE(slurp(a / "simulation.csv").empty());

  const std::string tp = "turnpike --example fixture-a --T 10 --K 10000 --paths 0";
  ASSERT_EQ(lqgtp(tp + " --out " + a.string()), 0);
  ASSERT_EQ(lqgtp(tp + " --out " + b.string(), "LQGTP_OUT=" + env.string()), 0);
  EXPECT_EQ(slurp(a / "turnpike.json"), slurp(b / "turnpike.json"));
  EXPECT_EQ(slurp(a / "profiles.csv"), slurp(b / "profiles.csv"));
  EXPECT_FALSE(fs::exists(env / "turnpike.json"));  // --out wins
}

TEST(Cli, VerifyExitCodes) {
  const auto dir = scratch("verify");
  EXPECT_EQ(lqgtp("verify --example fixture-a --out " + dir.string()), 0);
  const auto j = nlohmann::json::parse(slurp(dir / "verify.json"));
  EXPECT_TRUE(j.contains("checks"));
  EXPECT_EQ(lqgtp("verify --example fixture-a --seed 7 --out " + dir.string()), 0);
  EXPECT_EQ(lqgtp("verify --example fixture-a --shift-mu0 --out " + dir.string()), 1);
}
