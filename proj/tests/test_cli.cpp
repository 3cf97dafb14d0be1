#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "mpse/config.hpp"

using namespace mpse;

namespace {

std::string g_dir;  // per-suite scratch directory

int run_cli(const std::string& args) {
  std::string cmd = std::string(MPSE_CLI_PATH) + " " + args + " >" + g_dir + "/stdout.txt 2>" +
                    g_dir + "/stderr.txt";
  int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

const char* kTinyConfig = R"({
  "system": {"A": [[2.0]], "Q": [[0.1]]},
  "parties": [
    {"C": [[1.0]], "R": [[0.1]]},
    {"C": [[1.0]], "R": [[0.2]]}
  ],
  "design": {"method": "admm-stabilize", "gamma": 0.1, "iterations": 8},
  "protocol": {"mode": "plaintext", "scale_bits": 40, "key_bits": 512},
  "horizon": 20,
  "runs": 50,
  "seed": 3
})";

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    char tmpl[] = "/tmp/mpse_cli_XXXXXX";
    ASSERT_NE(mkdtemp(tmpl), nullptr);
    g_dir = tmpl;
    write_file(g_dir + "/tiny.json", kTinyConfig);
  }
};

}  // namespace

TEST_F(CliTest, MissingConfigFileFails) {
  EXPECT_EQ(run_cli("design --config " + g_dir + "/does_not_exist.json"), 2);
  EXPECT_NE(slurp(g_dir + "/stderr.txt").find("cannot open"), std::string::npos);
}

TEST_F(CliTest, MalformedConfigReportsField) {
  write_file(g_dir + "/bad.json", R"({
    "system": {"A": [[2.0]], "Q": [[0.1]]},
    "parties": [{"C": [[1.0]], "R": [[0.1]]}],
    "design": {"method": "gradient-descent"}
  })");
  EXPECT_EQ(run_cli("design --config " + g_dir + "/bad.json"), 2);
  EXPECT_NE(slurp(g_dir + "/stderr.txt").find("design.method"), std::string::npos);
}

TEST_F(CliTest, KeygenGuardsSmallKeys) {
  EXPECT_EQ(run_cli("keygen --bits 256 --out " + g_dir + "/k.json"), 2);
  EXPECT_EQ(run_cli("keygen --bits 256 --seed 7 --insecure-small-keys --out " + g_dir + "/k.json"),
            0);
  PrivateKey sk = load_keypair(g_dir + "/k.json");
  CryptoRng rng(1);
  EXPECT_EQ(decrypt(sk, encrypt(sk.pk, 12345, rng)), 12345);
}

TEST_F(CliTest, DesignWritesGainsAndHistory) {
  int rc = run_cli("design --config " + g_dir + "/tiny.json --out " + g_dir +
                   "/gains.json --history " + g_dir + "/hist.csv");
  EXPECT_EQ(rc, 0) << slurp(g_dir + "/stderr.txt");
  EXPECT_NE(slurp(g_dir + "/stdout.txt").find("accepted=yes"), std::string::npos);
  auto gains = load_gains(g_dir + "/gains.json");
  ASSERT_EQ(gains.size(), 2u);
  EXPECT_EQ(gains[0].rows(), 1);
  std::string hist = slurp(g_dir + "/hist.csv");
  // header plus one row per iteration
  EXPECT_EQ(std::count(hist.begin(), hist.end(), '\n'), 9);
  EXPECT_EQ(hist.rfind("iter,value", 0), 0u);
}

TEST_F(CliTest, SimulateWritesDeterministicTrace) {
  ASSERT_EQ(run_cli("design --config " + g_dir + "/tiny.json --out " + g_dir + "/gains.json"), 0);
  std::string base = "simulate --config " + g_dir + "/tiny.json --gains " + g_dir + "/gains.json";
  ASSERT_EQ(run_cli(base + " --out " + g_dir + "/t1.csv"), 0) << slurp(g_dir + "/stderr.txt");
  ASSERT_EQ(run_cli(base + " --out " + g_dir + "/t2.csv"), 0);
  std::string t1 = slurp(g_dir + "/t1.csv");
  EXPECT_EQ(t1, slurp(g_dir + "/t2.csv"));
  EXPECT_EQ(std::count(t1.begin(), t1.end(), '\n'), 21);  // header + 20 rounds
  EXPECT_EQ(t1.rfind("k,err_sq", 0), 0u);

  // a different seed changes the realization
  ASSERT_EQ(run_cli(base + " --seed 99 --out " + g_dir + "/t3.csv"), 0);
  EXPECT_NE(t1, slurp(g_dir + "/t3.csv"));
}

TEST_F(CliTest, SimulateZeroHorizonGivesHeaderOnlyCsv) {
  std::string cfg = kTinyConfig;
  cfg.replace(cfg.find("\"horizon\": 20"), 13, "\"horizon\": 0");
  write_file(g_dir + "/zero.json", cfg);
  ASSERT_EQ(run_cli("design --config " + g_dir + "/zero.json --out " + g_dir + "/gz.json"), 0);
  ASSERT_EQ(run_cli("simulate --config " + g_dir + "/zero.json --gains " + g_dir +
                    "/gz.json --out " + g_dir + "/tz.csv"),
            0);
  EXPECT_EQ(slurp(g_dir + "/tz.csv"), "k,err_sq\n");
}

TEST_F(CliTest, SimulateEncryptedNeedsInsecureFlagForSmallKeys) {
  ASSERT_EQ(run_cli("design --config " + g_dir + "/tiny.json --out " + g_dir + "/gains.json"), 0);
  std::string base = "simulate --config " + g_dir + "/tiny.json --gains " + g_dir + "/gains.json";
  EXPECT_EQ(run_cli(base + " --mode enc-inproc"), 2);  // 512-bit key in config
  EXPECT_EQ(run_cli(base + " --mode enc-inproc --insecure-small-keys"), 0)
      << slurp(g_dir + "/stderr.txt");
}

TEST_F(CliTest, CompareModesAgreeWithinTolerance) {
  ASSERT_EQ(run_cli("design --config " + g_dir + "/tiny.json --out " + g_dir + "/gains.json"), 0);
  int rc = run_cli("simulate --config " + g_dir + "/tiny.json --gains " + g_dir +
                   "/gains.json --compare-modes --insecure-small-keys");
  EXPECT_EQ(rc, 0) << slurp(g_dir + "/stderr.txt");
  std::string out = slurp(g_dir + "/stdout.txt");
  EXPECT_NE(out.find("enc-inproc"), std::string::npos);
  EXPECT_NE(out.find("enc-socket"), std::string::npos);
}

TEST_F(CliTest, AnalyzeWritesReport) {
  ASSERT_EQ(run_cli("design --config " + g_dir + "/tiny.json --out " + g_dir + "/gains.json"), 0);
  int rc = run_cli("analyze --config " + g_dir + "/tiny.json --gains " + g_dir +
                   "/gains.json --runs 100 --workers 2 --out " + g_dir + "/rep.csv");
  EXPECT_EQ(rc, 0) << slurp(g_dir + "/stderr.txt");
  std::string rep = slurp(g_dir + "/rep.csv");
  EXPECT_EQ(rep.rfind("k,tr_deterministic,tr_empirical,runs", 0), 0u);
  EXPECT_EQ(std::count(rep.begin(), rep.end(), '\n'), 22);  // header + k = 0..20
  // deterministic-only variant leaves the empirical column empty
  ASSERT_EQ(run_cli("analyze --config " + g_dir + "/tiny.json --gains " + g_dir +
                    "/gains.json --runs 0 --out " + g_dir + "/rep0.csv"),
            0);
  std::string rep0 = slurp(g_dir + "/rep0.csv");
  EXPECT_NE(rep0.find(",,0\n"), std::string::npos);
}

TEST_F(CliTest, MismatchedGainsCountRejected) {
  write_file(g_dir + "/one_gain.json", R"({"gains": [[[0.5]]]})");
  EXPECT_EQ(run_cli("simulate --config " + g_dir + "/tiny.json --gains " + g_dir +
                    "/one_gain.json"),
            2);
  EXPECT_NE(slurp(g_dir + "/stderr.txt").find("2 parties"), std::string::npos);
}

TEST_F(CliTest, ShippedReferenceConfigsParse) {
  ExperimentConfig a = load_experiment_config(std::string(MPSE_CONFIG_DIR) +
                                              "/reference_stabilize.json");
  EXPECT_EQ(a.parties.size(), 4u);
  EXPECT_EQ(a.design.method, DesignMethod::AdmmStabilize);
  EXPECT_EQ(a.horizon, 300);
  ExperimentConfig b = load_experiment_config(std::string(MPSE_CONFIG_DIR) +
                                              "/reference_mmse.json");
  EXPECT_EQ(b.design.method, DesignMethod::AdmmMmse);
  EXPECT_NEAR(b.design.gamma, 0.3, 1e-15);
}
