#include <gtest/gtest.h>

#include <json.hpp>

#include <cstdio>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int status = 0;
  std::string err;
};

fs::path scratch() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / ("addiv_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

CliResult cli(const std::string& args) {
  const fs::path err = scratch() / "stderr.txt";
  const std::string cmd = std::string(ADDIV_CLI_PATH) + " " + args + " > /dev/null 2> " + err.string();
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(err)};
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

const fs::path& y1a1_csv() {
  static const fs::path p = [] {
    const fs::path out = scratch() / "y1a1.csv";
    const CliResult r = cli("simulate --dgp y1a1 --n 5000 --seed 3 --debug-latents --out " + out.string());
    EXPECT_EQ(r.status, 0) << r.err;
    return out;
  }();
  return p;
}

}  // namespace

TEST(Cli, SimulateWritesRowsLatentsAndProvenance) {
  const std::string csv = slurp(y1a1_csv());
  EXPECT_EQ(lines(csv), 5001u);
  EXPECT_NE(csv.substr(0, csv.find('\n')).find('u'), std::string::npos);
  const auto meta = nlohmann::json::parse(slurp(y1a1_csv().string() + ".provenance.json"));
  EXPECT_EQ(meta["provenance"]["command"], "simulate");
  EXPECT_EQ(meta["provenance"]["seed"], 3);
  EXPECT_EQ(meta["provenance"]["config_hash"].get<std::string>().size(), 16u);
}

TEST(Cli, EstimateWritesSchemaVersionedReport) {
  const fs::path out = scratch() / "ate.json";
  const CliResult r = cli("estimate --input " + y1a1_csv().string() + " --estimator adaptive --folds 2 --seed 1 --out " +
                    out.string());
  ASSERT_EQ(r.status, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(out));
  for (const char* key : {"schema_version", "estimand", "psi_hat", "std_error", "ci_lower", "ci_upper", "n", "K", "seed",
                          "per_fold_variance", "provenance"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["n"], 5000);
  EXPECT_LT(j["ci_lower"].get<double>(), j["psi_hat"].get<double>());
  EXPECT_LT(std::abs(j["psi_hat"].get<double>()), 4 * j["std_error"].get<double>());
}

TEST(Cli, ErrorsAreSingleLineJsonWithNonzeroExit) {
  const CliResult unknown = cli("simulate --dgp nope --n 10 --out " + (scratch() / "x.csv").string());
  EXPECT_NE(unknown.status, 0);
  EXPECT_EQ(lines(unknown.err), 1u) << unknown.err;
  const auto j = nlohmann::json::parse(unknown.err);
  EXPECT_TRUE(j.contains("error"));
  EXPECT_NE(j["message"].get<std::string>().find("y1a1"), std::string::npos);

  const CliResult folds = cli("estimate --input " + y1a1_csv().string() + " --folds 1 --out " + (scratch() / "f.json").string());
  EXPECT_EQ(folds.status, 2);
  EXPECT_EQ(lines(folds.err), 1u);
  const CliResult missing = cli("estimate --input " + (scratch() / "absent.csv").string() + " --out " +
                          (scratch() / "m.json").string());
  EXPECT_NE(missing.status, 0);
  EXPECT_EQ(lines(missing.err), 1u);
  const CliResult dose = cli("estimate --input " + y1a1_csv().string() + " --estimator dose --a0 1 --out " +
                       (scratch() / "d.json").string());
  EXPECT_NE(dose.status, 0);
}

TEST(Cli, BootstrapRequiresFiftyReplicates) {
  const CliResult r = cli("bootstrap --input " + y1a1_csv().string() + " --reps 49 --out " + (scratch() / "b.json").string());
  EXPECT_EQ(r.status, 2);
  EXPECT_EQ(lines(r.err), 1u);
}

TEST(Cli, DiagnoseAivNeedsTwoWeights) {
  const CliResult r = cli("diagnose --input " + y1a1_csv().string() + " --check aiv --pi1 identity:0 --out " +
                    (scratch() / "g.json").string());
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("pi2"), std::string::npos);
}

TEST(Cli, MonteCarloSmokeRunIsIndependentOfJobs) {
  const fs::path a = scratch() / "mc1", b = scratch() / "mc2";
  const std::string common = "montecarlo --dgp oracle-aiv --n 3000 --reps 4 --estimator fixed --folds 2 --seed 5 ";
  ASSERT_EQ(cli(common + "--jobs 1 --out " + a.string()).status, 0);
  ASSERT_EQ(cli(common + "--jobs 2 --out " + b.string()).status, 0);
  for (const char* ext : {".records.csv", ".table.csv"}) {
    const std::string x = slurp(a.string() + ext);
    EXPECT_FALSE(x.empty()) << ext;
    EXPECT_EQ(x, slurp(b.string() + ext)) << ext;
  }
  EXPECT_EQ(lines(slurp(a.string() + ".records.csv")), 5u);
  const auto s = nlohmann::json::parse(slurp(a.string() + ".summary.json"));
  EXPECT_TRUE(s.contains("schema_version"));
}

TEST(Cli, ConfigFileMergesAndFlagsWin) {
  const fs::path cfg = scratch() / "est.toml";
  std::ofstream(cfg) << "[estimate]\nestimator = \"fixed\"\nfolds = 3\nseed = 4\n";
  const fs::path a = scratch() / "cfg_a.json", b = scratch() / "cfg_b.json";
  ASSERT_EQ(cli("--config " + cfg.string() + " estimate --input " + y1a1_csv().string() + " --out " + a.string()).status, 0);
  const auto ja = nlohmann::json::parse(slurp(a));
  EXPECT_EQ(ja["K"], 3);
  ASSERT_EQ(cli("--config " + cfg.string() + " estimate --input " + y1a1_csv().string() + " --folds 2 --out " +
                b.string())
                .status,
            0);
  EXPECT_EQ(nlohmann::json::parse(slurp(b))["K"], 2);
  EXPECT_NE(ja["provenance"]["config_hash"], nlohmann::json::parse(slurp(b))["provenance"]["config_hash"]);

  std::ofstream(cfg) << "[estimate]\nbogus = 1\n";
  const CliResult bad = cli("--config " + cfg.string() + " estimate --input " + y1a1_csv().string() + " --out " + a.string());
  EXPECT_NE(bad.status, 0);
  EXPECT_EQ(lines(bad.err), 1u);
}
