#include <gtest/gtest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const std::string kShape =
    " --dim 16 --query-count 32 --batch 32 --max-degree 8 --ef-construction 16"
    " --ef 16 -k 5 --workers 1";
const std::string kSmall = " --count 1500" + kShape;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("ndsim_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Runs the tool with stdout and stderr captured; returns its exit status.
  int run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " " + NDSIM_CLI_PATH + " " + args + " > " +
                            (dir_ / "stdout.txt").string() + " 2> " +
                            (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string read(const fs::path& p) const {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
  std::string out_flag(const std::string& sub = "out") const {
    return " -o " + (dir_ / sub).string();
  }
  nlohmann::json json_at(const fs::path& p) const { return nlohmann::json::parse(read(p)); }

  fs::path dir_;
};

TEST_F(Cli, BuildWritesArtifactsAndBeta) {
  ASSERT_EQ(run("build" + kSmall + out_flag()), 0) << read(dir_ / "stderr.txt");
  for (const char* f : {"graph.lcsr", "ordering.ordr", "layout.lncr", "build.json"}) {
    EXPECT_TRUE(fs::exists(dir_ / "out" / f)) << f;
  }
  const auto manifest = json_at(dir_ / "out" / "build.json");
  EXPECT_LE(manifest["beta_after"].get<double>(), manifest["beta_before"].get<double>());
  EXPECT_TRUE(manifest.contains("config"));
  EXPECT_NE(read(dir_ / "stdout.txt").find("beta after reordering"), std::string::npos);
}

TEST_F(Cli, RebuildIsByteIdentical) {
  ASSERT_EQ(run("build" + kSmall + out_flag("a")), 0);
  ASSERT_EQ(run("build" + kSmall + out_flag("b")), 0);
  for (const char* f : {"graph.lcsr", "ordering.ordr", "layout.lncr"}) {
    EXPECT_EQ(read(dir_ / "a" / f), read(dir_ / "b" / f)) << f;
  }
}

TEST_F(Cli, MissingDatasetExitsThree) {
  EXPECT_EQ(run("build --base /no/such/base.fvecs" + out_flag()), 3);
  EXPECT_NE(read(dir_ / "stderr.txt").find("/no/such/base.fvecs"), std::string::npos);
}

TEST_F(Cli, ConfigErrorsExitTwo) {
  std::ofstream(dir_ / "bad.json") << R"({"search": {"eff": 3}})";
  EXPECT_EQ(run("build -c " + (dir_ / "bad.json").string() + out_flag()), 2);
  EXPECT_EQ(run("build --flags re,xx" + out_flag()), 2);
  EXPECT_EQ(run("build --no-such-option"), 2);
  EXPECT_EQ(run("build", "NDSIM_SEED=abc"), 2);
}

TEST_F(Cli, MismatchedArtifactsExitFour) {
  ASSERT_EQ(run("build" + kSmall + out_flag()), 0);
  EXPECT_EQ(run("search --count 1600" + kShape + out_flag()), 4);
}

TEST_F(Cli, SearchIsTransparentAndMatchesOracle) {
  ASSERT_EQ(run("build" + kSmall + out_flag()), 0);
  ASSERT_EQ(run("search" + kSmall + " --flags none" + out_flag()), 0) << read(dir_ / "stderr.txt");
  auto none = json_at(dir_ / "out" / "results.json");
  EXPECT_TRUE(none.contains("config"));
  EXPECT_EQ(run("oracle-check" + kSmall + " --flags none" + out_flag()), 0)
      << read(dir_ / "stdout.txt");
  EXPECT_TRUE(fs::exists(dir_ / "out" / "oracle.json"));

  ASSERT_EQ(run("search" + kSmall + " --flags all" + out_flag()), 0);
  auto all = json_at(dir_ / "out" / "results.json");
  const auto& a = none["result"]["results"];
  const auto& b = all["result"]["results"];
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i]["topk"], b[i]["topk"]) << i;
  EXPECT_NE(read(dir_ / "out" / "report.csv").find("page_access_ratio"), std::string::npos);
}

TEST_F(Cli, HostIsSlowerThanLun) {
  ASSERT_EQ(run("build" + kSmall + out_flag()), 0);
  ASSERT_EQ(run("search" + kSmall + " --accel lun" + out_flag()), 0);
  const double lun = json_at(dir_ / "out" / "results.json")["result"]["makespan_us"].get<double>();
  ASSERT_EQ(run("search" + kSmall + " --accel host" + out_flag()), 0);
  const double host = json_at(dir_ / "out" / "results.json")["result"]["makespan_us"].get<double>();
  EXPECT_GE(host, lun);
}

TEST_F(Cli, SeedPrecedence) {
  std::ofstream(dir_ / "c.json") << R"({"seed": 5})";
  const std::string cfg = " -c " + (dir_ / "c.json").string();
  auto seed_of = [&](const std::string& args, const std::string& env) {
    EXPECT_EQ(run("build" + kSmall + cfg + args + out_flag(), env), 0);
    return json_at(dir_ / "out" / "build.json")["config"]["seed"].get<std::uint64_t>();
  };
  EXPECT_EQ(seed_of("", ""), 5u);
  EXPECT_EQ(seed_of("", "NDSIM_SEED=7"), 7u);
  EXPECT_EQ(seed_of(" --seed 9", "NDSIM_SEED=7"), 9u);
}

TEST_F(Cli, ReportsHaveHeadersAndRows) {
  std::ofstream(dir_ / "c.json") << R"({"sweeps": {"batch_sizes": [8, 32]}})";
  const std::string cfg = " -c " + (dir_ / "c.json").string();
  ASSERT_EQ(run("ablate" + kSmall + cfg + out_flag()), 0) << read(dir_ / "stderr.txt");
  ASSERT_EQ(run("ecc" + kSmall + cfg + out_flag()), 0);
  ASSERT_EQ(run("batchsweep" + kSmall + cfg + out_flag()), 0);
  auto lines = [&](const char* f) {
    const std::string s = read(dir_ / "out" / f);
    EXPECT_EQ(s.rfind("label,", 0), 0u) << f;
    return std::count(s.begin(), s.end(), '\n') - 1;
  };
  EXPECT_EQ(lines("ablation.csv"), 5);
  EXPECT_EQ(lines("ecc.csv"), 5);
  EXPECT_EQ(lines("batchsweep.csv"), 4);
  EXPECT_NE(read(dir_ / "out" / "ecc.csv").find("\np_hd=0,"), std::string::npos);
  EXPECT_TRUE(json_at(dir_ / "out" / "ablation.json").contains("config"));
}

TEST_F(Cli, ReportsAreByteIdenticalOnRerun) {
  ASSERT_EQ(run("ablate" + kSmall + out_flag()), 0);
  const std::string json = read(dir_ / "out" / "ablation.json");
  const std::string csv = read(dir_ / "out" / "ablation.csv");
  ASSERT_EQ(run("ablate" + kSmall + out_flag()), 0);
  EXPECT_EQ(read(dir_ / "out" / "ablation.json"), json);
  EXPECT_EQ(read(dir_ / "out" / "ablation.csv"), csv);
}

}  // namespace
