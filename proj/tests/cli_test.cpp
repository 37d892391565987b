#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "bidrn/checkpoint.hpp"
#include "checks.hpp"
#include "commands.hpp"

using namespace bidrn::cli;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_args(std::vector<std::string> args) {
  args.insert(args.begin(), "bidrn");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  testing::internal::CaptureStdout();
  testing::internal::CaptureStderr();
  const int code = run(int(argv.size()), argv.data());
  testing::internal::GetCapturedStdout();
  testing::internal::GetCapturedStderr();
  return code;
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Verify, PassesAndCatchesInjectedFault) {
  auto ok = cmd_verify(3, 100);
  EXPECT_EQ(ok.exit_code, kOk);
  EXPECT_NE(ok.out.find("total: 400 passed, 0 failed"), std::string::npos) << ok.out;
  auto bad = cmd_verify(3, 100, true);
  EXPECT_EQ(bad.exit_code, kCheckFailed);
  EXPECT_NE((bad.out + bad.err).find("\"suite\""), std::string::npos);
}

TEST(Verify, SuitesReportCounterexampleOnlyOnFailure) {
  for (const auto& s : run_verify(5, 40)) {
    EXPECT_EQ(s.failed, 0u) << s.name;
    EXPECT_FALSE(s.counterexample.has_value());
  }
}

TEST(Gradcheck, AllRulesPass) {
  const auto r = run_gradcheck(1);
  EXPECT_TRUE(r.passed());
  EXPECT_GE(r.rules.size(), 20u);
  for (const auto& rule : r.rules) {
    EXPECT_TRUE(rule.passed) << rule.rule << " " << rule.worst_error;
    EXPECT_GT(rule.checked, 0u) << rule.rule;
  }
  EXPECT_EQ(r.saturated_ste_grad, 0.0);
}

TEST(Gradcheck, InjectedSteFaultFails) {
  EXPECT_EQ(cmd_gradcheck(1, true).exit_code, kCheckFailed);
  EXPECT_EQ(cmd_gradcheck(1, false).exit_code, kOk);
}

TEST(Stats, GoldenOutputIsByteExact) {
  const std::string dir = BIDRN_SOURCE_DIR "/configs/";
  auto r = cmd_stats(dir + "tiny.json");
  EXPECT_EQ(r.exit_code, kOk);
  EXPECT_EQ(r.out, slurp(dir + "tiny.stats.json"));
}

TEST(Stats, BadInputsExitWithUsage) {
  EXPECT_EQ(cmd_stats("/nonexistent/cfg.json").exit_code, kUsage);
  const fs::path d = scratch("bidrn_cli_stats");
  std::ofstream(d / "broken.json") << "{\n  \"blocks\": [ ,\n";
  auto r = cmd_stats((d / "broken.json").string());
  EXPECT_EQ(r.exit_code, kUsage);
  EXPECT_NE(r.err.find("line"), std::string::npos) << r.err;
  std::ofstream(d / "odd.json")
      << R"({"input_shape":[4,8,8],"blocks":[{"kind":"fusion_down","in_channels":3,)"
      << R"("out_channels":1,"stride":1,"block_residual":"none"}],"seed":1})";
  auto odd = cmd_stats((d / "odd.json").string());
  EXPECT_EQ(odd.exit_code, kUsage);
  EXPECT_NE(odd.err.find("blocks"), std::string::npos) << odd.err;
}

TEST(InitConfig, RoundTripsThroughStats) {
  const fs::path d = scratch("bidrn_cli_init");
  const std::string path = (d / "net.json").string();
  EXPECT_EQ(cmd_init_config("full-bidrb", path, std::nullopt).exit_code, kOk);
  EXPECT_EQ(cmd_stats(path).out, slurp(BIDRN_SOURCE_DIR "/configs/tiny.stats.json"));
  EXPECT_EQ(cmd_init_config("no-such-kind", "", std::nullopt).exit_code, kUsage);
  auto printed = cmd_init_config("base-lcr", "", 42);
  EXPECT_NE(printed.out.find("\"seed\": 42"), std::string::npos) << printed.out;
}

TEST(TrainToy, WritesLossAndWeights) {
  const fs::path d = scratch("bidrn_cli_train");
  TrainArgs a;
  a.steps = 3;
  a.out_dir = d.string();
  auto r = cmd_train_toy(a);
  ASSERT_EQ(r.exit_code, kOk) << r.err;
  const std::string csv = slurp(d / "loss.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,loss_total,loss_param,loss_joint,loss_box");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_FALSE(bidrn::read_checkpoint((d / "weights.bin").string()).empty());
}

TEST(TrainToy, ZeroStepsPrintsHeaderOnly) {
  TrainArgs a;
  a.steps = 0;
  auto r = cmd_train_toy(a);
  EXPECT_EQ(r.exit_code, kOk);
  EXPECT_EQ(r.out, "step,loss_total,loss_param,loss_joint,loss_box\n");
}

TEST(Bench, CsvHasOneRowPerShape) {
  auto r = cmd_bench("small", 1, 1);
  EXPECT_EQ(r.exit_code, kOk);
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 5);
  EXPECT_EQ(cmd_bench("gigantic", 1, 1).exit_code, kUsage);
}

TEST(Run, ExitCodes) {
  EXPECT_EQ(run_args({"verify", "--cases", "5"}), kOk);
  EXPECT_EQ(run_args({"verify", "--inject-fault", "mask", "--cases", "20"}), kCheckFailed);
  EXPECT_EQ(run_args({"verify", "--inject-fault", "bogus"}), kUsage);
  EXPECT_EQ(run_args({"stats"}), kUsage);
  EXPECT_EQ(run_args({"no-such-command"}), kUsage);
  EXPECT_EQ(run_args({"train-toy", "--steps", "-3"}), kUsage);
  EXPECT_EQ(run_args({"stats", BIDRN_SOURCE_DIR "/configs/tiny.json"}), kOk);
}
