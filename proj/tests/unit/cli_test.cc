// Copyright 2026 The llmsched Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "llmsched/commands.hpp"
#include "llmsched/config.hpp"

namespace llmsched {
namespace {

namespace fs = std::filesystem;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("llmsched_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Runs the tool; stdout and stderr land in out_/err_.
  int cli(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " " LLMSCHED_CLI_PATH " " + args + " >" + path("stdout") +
                            " 2>" + path("stderr");
    const int rc = std::system(cmd.c_str());
    out_ = slurp(path("stdout"));
    err_ = slurp(path("stderr"));
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  static std::string slurp(const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  }

  static std::map<std::string, std::string> kv_block(const std::string& text) {
    std::map<std::string, std::string> m;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      auto eq = line.find('=');
      if (eq != std::string::npos) m[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return m;
  }

  static std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) out.push_back(line);
    return out;
  }

  fs::path dir_;
  std::string out_, err_;
};

TEST_F(CliTest, GenTraceIsDeterministic) {
  ASSERT_EQ(cli("gen-trace --lambda 1.0 --horizon 1000 --seed 7 -o " + path("a.csv")), 0);
  ASSERT_EQ(cli("gen-trace --lambda 1.0 --horizon 1000 --seed 7 -o " + path("b.csv")), 0);
  const auto a = slurp(path("a.csv"));
  EXPECT_EQ(a, slurp(path("b.csv")));
  EXPECT_EQ(lines(a).front(), "id,arrival_time_s,prompt_len,output_len,class");
  EXPECT_GT(lines(a).size(), 900u);
}

TEST_F(CliTest, LogNormalPresetAndPayingShare) {
  ASSERT_EQ(cli("gen-trace --table1 --lambda 1 --horizon 20000 --paying-frac 0.05 -o " +
                path("t.csv")),
            0)
      << err_;
  std::ifstream f(path("t.csv"));
  const auto trace = load_trace(f, paying_free_classes());
  ASSERT_GT(trace.size(), 15000u);
  std::vector<double> prompts;
  double paying = 0;
  for (const auto& r : trace) {
    prompts.push_back(double(r.prompt_len));
    if (r.class_id == 0) ++paying;
  }
  std::nth_element(prompts.begin(), prompts.begin() + prompts.size() / 2, prompts.end());
  EXPECT_NEAR(prompts[prompts.size() / 2], 1730, 0.03 * 1730);
  const double n = double(trace.size());
  EXPECT_NEAR(paying, 0.05 * n, 4 * std::sqrt(n * 0.05 * 0.95));
}

TEST_F(CliTest, RunWithBoundsOnStableRad) {
  const int rc = cli("run --lambda 0.0762 --horizon 3000 --n 7 --assert-bounds -o " + path("r"));
  ASSERT_EQ(rc, 0) << err_;
  const auto b = kv_block(slurp(path("r/bounds.txt")));
  EXPECT_EQ(b.at("all_pass"), "true");
  for (const char* f : {"batches.csv", "requests.csv", "tokens.csv", "metrics.txt", "metrics.csv",
                        "effective_config.ini", "trace.csv"}) {
    EXPECT_TRUE(fs::exists(dir_ / "r" / f)) << f;
  }
  EXPECT_EQ(lines(slurp(path("r/batches.csv"))).front(),
            "node,batch_seq,start_s,end_s,tau,n_prefill_items,n_decode_items,flags");
  EXPECT_EQ(lines(slurp(path("r/requests.csv"))).front(),
            "id,class,arrival_s,first_token_s,completion_s,prompt_len,output_len");
  EXPECT_EQ(lines(slurp(path("r/tokens.csv"))).front(), "id,token_index,emit_s");
  EXPECT_EQ(lines(slurp(path("r/metrics.csv"))).front(), kMetricsCsvHeader);
}

TEST_F(CliTest, UnknownPolicyIsConfigError) {
  EXPECT_EQ(cli("run --policy fifo -o " + path("r")), exit_code::kConfig);
  EXPECT_NE(err_.find("rad|alt_cycle|request_level|sarathi|vllm|slai|distserve"),
            std::string::npos);
}

TEST_F(CliTest, RerunIsByteIdentical) {
  const std::string common = "--policy slai --prefill-order spf --lambda 0.05 --horizon 800 ";
  ASSERT_EQ(cli("run " + common + "-o " + path("a")), 0) << err_;
  ASSERT_EQ(cli("run " + common + "-o " + path("b")), 0) << err_;
  for (const auto& e : fs::directory_iterator(dir_ / "a")) {
    const auto name = e.path().filename();
    EXPECT_EQ(slurp(e.path().string()), slurp((dir_ / "b" / name).string())) << name;
  }
}

TEST_F(CliTest, MemoryOverflowExitCode) {
  const int rc = cli("run --policy sarathi --token-budget 8 --alpha 8 --beta 8 --kv-capacity 6 "
                     "--prompt-len 4 --output-len 4 --lambda 1 --horizon 20 -o " +
                     path("r"));
  EXPECT_EQ(rc, exit_code::kMemoryOverflow) << err_;
  EXPECT_TRUE(fs::exists(dir_ / "r" / "overflow.txt"));
}

TEST_F(CliTest, SweepRowCounts) {
  const int rc = cli("sweep --policies rad,sarathi --lambdas 0.02,0.04,0.06 --seeds 1,2 "
                     "--horizon 400 --jobs 2 -o " +
                     path("s"));
  ASSERT_EQ(rc, 0) << err_;
  const auto rows = lines(slurp(path("s/sweep.csv")));
  ASSERT_EQ(rows.size(), 1u + 12 + 6);
  const auto means = std::count_if(rows.begin(), rows.end(),
                                   [](const std::string& r) { return r.rfind("mean,", 0) == 0; });
  EXPECT_EQ(means, 6);
  EXPECT_NE(out_.find("= 12 cells"), std::string::npos);
}

TEST_F(CliTest, SweepFlagsOverload) {
  const int rc = cli("sweep --policies rad --lambdas 0.05,0.2 --seeds 1 --horizon 2000 -o " +
                     path("s"));
  ASSERT_EQ(rc, 0) << err_;
  const auto rows = lines(slurp(path("s/sweep_status.csv")));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_NE(rows[1].find(",false,"), std::string::npos) << rows[1];
  EXPECT_NE(rows[2].find(",true,"), std::string::npos) << rows[2];
}

TEST_F(CliTest, SweepJudgesDivergenceAcrossSeeds) {
  const int rc = cli("sweep --policies sarathi --lambdas 0.03,0.2 --seeds 1,2,3,4,5 "
                     "--horizon 3000 -o " + path("s"));
  ASSERT_EQ(rc, 0) << err_;
  const auto rows = lines(slurp(path("s/sweep_status.csv")));
  ASSERT_EQ(rows.size(), 11u);
  for (std::size_t k = 1; k <= 10; ++k) {
    const char* want = k <= 5 ? ",false," : ",true,";
    EXPECT_NE(rows[k].find(want), std::string::npos) << rows[k];
  }
}

TEST_F(CliTest, SweepOrderGrid) {
  const int rc = cli("sweep --policies slai,sarathi --order spf,fcfs --lambdas 0.02 --seeds 1 "
                     "--horizon 200 -o " +
                     path("s"));
  ASSERT_EQ(rc, 0) << err_;
  const auto csv = slurp(path("s/sweep.csv"));
  for (const char* label : {"slai-spf", "slai-fcfs", "sarathi-spf", "sarathi-fcfs"}) {
    EXPECT_NE(csv.find(std::string(",") + label + ","), std::string::npos) << label;
  }
}

TEST_F(CliTest, BoundsReports) {
  ASSERT_EQ(cli("bounds --lambda 0.0762 --csv " + path("cap.csv")), 0);
  auto b = kv_block(out_);
  EXPECT_EQ(b.at("verdict"), "stable-guaranteed");
  EXPECT_NEAR(std::stod(b.at("epsilon")), 0.2, 1e-3);
  EXPECT_EQ(b.at("rad_min_n"), "7");
  EXPECT_EQ(lines(slurp(path("cap.csv"))).size(), 2u);

  ASSERT_EQ(cli("bounds --lambda 0"), 0);
  b = kv_block(out_);
  EXPECT_EQ(b.at("verdict"), "stable-guaranteed");
  EXPECT_EQ(std::stod(b.at("margin")), 1.0);

  ASSERT_EQ(cli("bounds --nodes 2 --lambda 0.19047619047619047"), 0);
  EXPECT_EQ(kv_block(out_).at("verdict"), "indeterminate-boundary");
}

TEST_F(CliTest, HelpListsEveryKey) {
  for (const char* sub : {"gen-trace", "run", "sweep", "bounds"}) {
    ASSERT_EQ(cli(std::string(sub) + " --help"), 0);
    for (const auto& k : config_keys()) {
      const std::string full = std::string(k.section) + "." + k.key;
      EXPECT_NE(out_.find("--" + std::string(k.flag)), std::string::npos) << sub << " " << full;
      EXPECT_NE(out_.find(full + ", default '" + k.fallback + "'"), std::string::npos)
          << sub << " " << full;
    }
  }
}

TEST_F(CliTest, ConfigFileEnvAndFlagPrecedence) {
  {
    std::ofstream f(path("c.ini"));
    f << "[workload]\nlambda = 0.03\nhorizon = 300\n[policy]\npolicy = sarathi\n";
  }
  ASSERT_EQ(cli("run --horizon 100 -o " + path("r"), "LLMSCHED_CONFIG=" + path("c.ini")), 0)
      << err_;
  const auto eff = slurp(path("r/effective_config.ini"));
  EXPECT_NE(eff.find("lambda = 0.03"), std::string::npos);
  EXPECT_NE(eff.find("horizon = 100"), std::string::npos);
  EXPECT_NE(eff.find("policy = sarathi"), std::string::npos);
  EXPECT_NE(slurp(path("r/metrics.txt")).find("policy=sarathi-fcfs"), std::string::npos);

  ASSERT_EQ(cli("run --set workload.lambda=0.04 -c " + path("c.ini") + " -o " + path("r2")), 0);
  EXPECT_NE(slurp(path("r2/effective_config.ini")).find("lambda = 0.04"), std::string::npos);

  EXPECT_EQ(cli("run --set workload.bogus=1 -o " + path("r3")), exit_code::kConfig);
}

TEST(Config, RoundTripThroughIni) {
  KeyValues kv = merge_config({}, {{"policy.policy", "slai"}, {"gpu.gemm_rate.2x2x2", "1"}});
  std::stringstream ss;
  write_ini(ss, kv);
  EXPECT_EQ(read_ini(ss), kv);
  const auto e = build_config(kv);
  EXPECT_EQ(e.sim.policy.kind, PolicyKind::kSlai);
  EXPECT_EQ(e.sim.gpu.optimal_tile, (TileConfig{2, 2, 2}));
}

TEST(Config, TimeScaleAppliesToSlos) {
  const auto e = build_config(merge_config({}, {{"workload.time_scale", "1e7"}}));
  EXPECT_DOUBLE_EQ(e.classes[0].tbt_slo, 1e6);
  EXPECT_DOUBLE_EQ(e.classes[1].tbt_slo, 5e6);
}

TEST(Config, RejectsBadValues) {
  EXPECT_THROW(build_config(merge_config({}, {{"policy.n", "abc"}})), ConfigError);
  EXPECT_THROW(build_config(merge_config({}, {{"gpu.optimal_tile", "4x4x4"}})), ConfigError);
  EXPECT_THROW(merge_config({{"gpu.nope", "1"}}, {}), ConfigError);
  std::stringstream bad("lambda = 3\n");
  EXPECT_THROW(read_ini(bad), ConfigError);
}

}  // namespace
}  // namespace llmsched
