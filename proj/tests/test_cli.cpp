#include <gtest/gtest.h>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int code = -1;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

class Cli : public ::testing::Test {
 protected:
  fs::path dir;

  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir = fs::temp_directory_path() / (std::string("lgh_cli_") + info->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }

  // runs lgh with LGH_OUTPUT_DIR pointing at `out` (or unset when empty)
  Outcome lgh(const std::string& args, const fs::path& out) const {
    const fs::path err = dir / "stderr.txt";
    std::string cmd = out.empty() ? "env -u LGH_OUTPUT_DIR " : "LGH_OUTPUT_DIR='" + out.string() + "' ";
    cmd += std::string("'") + LGH_BINARY + "' " + args + " >'" + (dir / "stdout.txt").string() +
           "' 2>'" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
  }
  Outcome lgh(const std::string& args) const { return lgh(args, dir / "out"); }

  fs::path write_config(const json& j, const std::string& name = "config.json") const {
    const auto p = dir / name;
    spit(p, j.dump(2));
    return p;
  }
};

const json kIdentity = json::array({1, 0, 0, 0, 1, 0, 0, 0, 1});

json base_config() {
  return {{"problem",
           {{"t0", 0.0},
            {"tf", 2.0},
            {"g0", kIdentity},
            {"gf", kIdentity},
            {"phase1", {{"channels", {0, 1}}}},
            {"phase2", {{"channels", {0, 2}}}},
            {"ts0", 1.0},
            {"gs0", kIdentity}}},
          {"integrator", {{"h", 1e-3}}},
          {"shooting", {{"n_starts", 4}, {"seed", 9}}}};
}

// phase 1 spins about e1 at unit rate from the identity, so g(0,1) = sin t
json spin_config(double offset) {
  auto j = base_config();
  j["problem"]["phase1"] = {{"channels", {0}}};
  j["problem"]["surface"] = {{"entry", {0, 1}}, {"offset", offset}};
  return j;
}

}  // namespace

TEST_F(Cli, HorizonOrderIsAConfigError) {
  auto j = base_config();
  j["problem"]["t0"] = 3.0;
  const auto r = lgh("optimize --config " + write_config(j).string());
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("problem.tf"), std::string::npos) << r.err;
}

TEST_F(Cli, UnknownFieldIsNamed) {
  auto j = base_config();
  j["problem"]["tff"] = 3.0;
  const auto r = lgh("optimize --config " + write_config(j).string());
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("tff"), std::string::npos) << r.err;
}

TEST_F(Cli, MissingConfigFile) {
  EXPECT_EQ(lgh("optimize --config " + (dir / "nope.json").string()).code, 3);
}

TEST_F(Cli, OffGroupTargetIsRejected) {
  const auto cfg = write_config(base_config());
  spit(dir / "target.json", json::array({1, 0, 0, 0, 2, 0, 0, 0, 1}).dump());
  const auto r = lgh("shoot --config " + cfg.string() + " --phase 1 --target " +
                     (dir / "target.json").string());
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("target"), std::string::npos) << r.err;
}

TEST_F(Cli, ZeroControlsKeepTheState) {
  auto j = base_config();
  const json g0 = json::array({0, 0, 1, 0, -1, 0, 1, 0, 0});
  j["problem"]["g0"] = g0;
  spit(dir / "u.csv", "t,u1,u2\n0,0,0\n");
  const auto r = lgh("simulate --config " + write_config(j).string() + " --controls " +
                     (dir / "u.csv").string());
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(slurp(dir / "out" / "trajectory.csv"));
  std::string line, last;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("t,g11,g12,g13,g21", 0), 0u);
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  std::istringstream cells(last);
  std::string cell;
  std::getline(cells, cell, ',');
  EXPECT_NEAR(std::stod(cell), 2.0, 1e-12);
  for (int i = 0; i < 9; ++i) {
    std::getline(cells, cell, ',');
    EXPECT_NEAR(std::stod(cell), g0[i].get<double>(), 1e-12);
  }
}

TEST_F(Cli, SurfaceCrossingIsLocated) {
  spit(dir / "u.csv", "t,u1,u2\n0,1,0\n");
  const auto r = lgh("simulate --config " + write_config(spin_config(std::sin(0.5))).string() +
                     " --controls " + (dir / "u.csv").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ev = json::parse(slurp(dir / "out" / "events.json"));
  ASSERT_EQ(ev["events"].size(), 1u);
  EXPECT_NEAR(ev["events"][0]["t"].get<double>(), 0.5, 1e-8);
}

TEST_F(Cli, TangentialTouchExitsNonTransversal) {
  spit(dir / "u.csv", "t,u1,u2\n0,1,0\n");
  const auto r = lgh("simulate --config " + write_config(spin_config(1.0)).string() +
                     " --controls " + (dir / "u.csv").string());
  EXPECT_EQ(r.code, 2) << r.err;
  EXPECT_EQ(json::parse(slurp(dir / "out" / "events.json"))["error"], "NonTransversal");
}

TEST_F(Cli, ShootingToTheStartCostsNothing) {
  const auto cfg = write_config(base_config());
  spit(dir / "target.json", kIdentity.dump());
  const auto r = lgh("shoot --config " + cfg.string() + " --phase 1 --target " +
                     (dir / "target.json").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(slurp(dir / "out" / "shoot_phase1.json"));
  EXPECT_TRUE(j["converged"].get<bool>());
  EXPECT_NEAR(j["cost"].get<double>(), 0.0, 1e-12);
  EXPECT_TRUE(fs::exists(dir / "out" / "extremal_phase1.csv"));
}

TEST_F(Cli, ShootIsDeterministic) {
  auto j = base_config();
  j["problem"]["gs0"] = json::array({0, 1, 0, -1, 0, 0, 0, 0, 1});
  const auto cfg = write_config(j);
  ASSERT_EQ(lgh("shoot --config " + cfg.string() + " --phase 1", dir / "a").code, 0);
  ASSERT_EQ(lgh("shoot --config " + cfg.string() + " --phase 1", dir / "b").code, 0);
  for (const char* f : {"shoot_phase1.json", "extremal_phase1.csv"})
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
}

TEST_F(Cli, OutputDirectoryFromConfigWithoutOverride) {
  auto j = base_config();
  j["output_dir"] = (dir / "from_config").string();
  spit(dir / "u.csv", "t,u1,u2\n0,0,0\n");
  const auto r = lgh("simulate --config " + write_config(j).string() + " --controls " +
                     (dir / "u.csv").string(), fs::path{});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "from_config" / "trajectory.csv"));
}

TEST_F(Cli, CheckPassesAndSignFlipFails) {
  const auto ok = lgh("check", dir / "ok");
  EXPECT_EQ(ok.code, 0) << ok.err;
  EXPECT_TRUE(json::parse(slurp(dir / "ok" / "check.json"))["all_pass"].get<bool>());

  const auto bad = lgh("check --flip-costate-sign", dir / "bad");
  EXPECT_EQ(bad.code, 1) << bad.err;
  const auto j = json::parse(slurp(dir / "bad" / "check.json"));
  bool pairing_failed = false;
  for (const auto& item : j["checks"])
    if (item["name"] == "pairing_along_extremals") pairing_failed = !item["pass"].get<bool>();
  EXPECT_TRUE(pairing_failed);
}

TEST_F(Cli, PrintConfigRoundTrips) {
  ASSERT_EQ(lgh("run-satellite --print-config").code, 0);
  const auto j = json::parse(slurp(dir / "stdout.txt"));
  EXPECT_EQ(j["problem"]["tf"], 10.0);
  EXPECT_EQ(j["shooting"]["seed"], 42);
}
