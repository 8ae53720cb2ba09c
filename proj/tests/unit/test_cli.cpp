#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;

const fs::path kRoot = fs::temp_directory_path() / "edo_cli_tests";

// Each test owns a directory so ctest can run them in parallel.
fs::path test_dir() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  const fs::path dir = kRoot / info->name();
  fs::create_directories(dir);
  return dir;
}

fs::path log_path() { return test_dir() / "last.log"; }

int run(const std::string& args) {
  const std::string cmd = std::string(EDOLAB_PATH) + " " + args + " > " + log_path().string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_config(const std::string& name, const std::string& body) {
  const fs::path p = test_dir() / name;
  std::ofstream(p) << body;
  return p;
}

const char* kSmall = R"({"task_n_train": 12, "task_n_eval": 6, "feature_dim": 512, "warmup_epochs": 2,
  "minibatch_prompts": 4, "sc_repeats": 1, "rm_epochs": 5, "iterations": 2, "search_iterations": 4})";

class Cli : public ::testing::Test {
 protected:
  void SetUp() override { fs::remove_all(test_dir()); }
  void TearDown() override { fs::remove_all(test_dir()); }
};

TEST_F(Cli, TrainWritesRunDirectoryReproducibly) {
  const auto cfg = write_config("small.json", kSmall);
  const auto out = test_dir() / "run";
  const std::vector<std::string> files = {"config.json", "metrics.csv", "metrics_full.csv", "report.json",
                                          "reward_model.bin", "checkpoints/policy_iter_0.bin",
                                          "checkpoints/policy_iter_2.bin"};
  ASSERT_EQ(run("train --config " + cfg.string() + " --seed 5 --out " + out.string()), 0);
  std::vector<std::string> first;
  for (const auto& f : files) {
    ASSERT_TRUE(fs::exists(out / f)) << f;
    first.push_back(slurp(out / f));
  }
  fs::remove_all(out);
  ASSERT_EQ(run("train --config " + cfg.string() + " --seed 5 --out " + out.string()), 0);
  for (std::size_t i = 0; i < files.size(); ++i) EXPECT_EQ(slurp(out / files[i]), first[i]) << files[i];
}

TEST_F(Cli, GroupModeWithZeroAlphaMatchesBaseCheckpoint) {
  const auto cfg = write_config("small0.json", kSmall);
  ASSERT_EQ(run("train --config " + cfg.string() + " --mode grpo --out " + (test_dir() / "g").string()), 0);
  ASSERT_EQ(run("train --config " + cfg.string() + " --mode ed-grpo --alpha 0 --out " + (test_dir() / "e").string()), 0);
  EXPECT_EQ(slurp(test_dir() / "g" / "checkpoints" / "policy_iter_2.bin"),
            slurp(test_dir() / "e" / "checkpoints" / "policy_iter_2.bin"));
}

TEST_F(Cli, ConfigErrorsExitWithTwo) {
  EXPECT_EQ(run("train --config " + write_config("bad.json", R"({"alpah": 1})").string()), 2);
  EXPECT_NE(slurp(log_path()).find("alpah"), std::string::npos);
  EXPECT_EQ(run("train --config " + (test_dir() / "missing.json").string()), 2);
  EXPECT_EQ(run("train --mode ppo"), 2);
  EXPECT_EQ(run("frobnicate"), 2);
}

TEST_F(Cli, GradcheckPassesAndNegativeControlFails) {
  EXPECT_EQ(run("gradcheck --instances 3"), 0);
  EXPECT_EQ(run("gradcheck --instances 3 --corrupt 0.01"), 1);
}

TEST_F(Cli, EvalSearchTraceAndReport) {
  const auto cfg = write_config("small2.json", kSmall);
  const auto run_dir = test_dir() / "r";
  ASSERT_EQ(run("train --config " + cfg.string() + " --out " + run_dir.string()), 0);
  const std::string ckpt = (run_dir / "checkpoints" / "policy_iter_2.bin").string();
  const std::string rm = (run_dir / "reward_model.bin").string();

  EXPECT_EQ(run("eval --config " + cfg.string() + " --checkpoint " + ckpt + " --strategies greedy,bon --out " +
                (test_dir() / "ev_norm").string()),
            2);
  ASSERT_EQ(run("eval --config " + cfg.string() + " --checkpoint " + ckpt + " --reward-model " + rm +
                " --strategies greedy,sc,bon,search --out " + (test_dir() / "ev").string()),
            0);
  for (const char* f : {"eval_metrics.csv", "eval_report.json", "eval_rows.jsonl"}) {
    EXPECT_TRUE(fs::exists(test_dir() / "ev" / f)) << f;
  }
  EXPECT_NE(slurp(test_dir() / "ev" / "eval_rows.jsonl").find("\"pool_answers\""), std::string::npos);

  ASSERT_EQ(run("search-trace --config " + cfg.string() + " --checkpoint " + ckpt + " --reward-model " + rm +
                " --prompt-id 12 --out " + (test_dir() / "st").string()),
            0);
  EXPECT_NE(slurp(test_dir() / "st" / "search_trace_12.jsonl").find("\"sigma\""), std::string::npos);

  fs::remove(run_dir / "report.json");
  ASSERT_EQ(run("report --out " + run_dir.string()), 0);
  EXPECT_NE(slurp(run_dir / "report.json").find("\"delta\""), std::string::npos);
}

TEST_F(Cli, SweepEmitsTableAndTrendLine) {
  const auto cfg = write_config("sweep.json", R"({"task_n_train": 12, "task_n_eval": 6, "feature_dim": 512,
    "warmup_epochs": 2, "minibatch_prompts": 4, "sc_repeats": 1, "iterations": 1})");
  ASSERT_EQ(run("sweep --config " + cfg.string() + " --strategies greedy,sc --out " + (test_dir() / "sw").string()), 0);
  const std::string table = slurp(test_dir() / "sw" / "sweep.csv");
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 6);
  EXPECT_NE(slurp(log_path()).find("distinct_4 trend"), std::string::npos);
}

}  // namespace
