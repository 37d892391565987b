#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace bidrn::cli {

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kUsage = 2 };

struct CommandResult {
  int exit_code = kOk;
  std::string out;                     // stdout
  std::string err;                     // stderr
};

CommandResult cmd_verify(std::uint64_t seed, std::size_t cases, bool fault_mask = false);
CommandResult cmd_gradcheck(std::uint64_t seed, bool fault_ste = false);
CommandResult cmd_stats(const std::string& config_path);
CommandResult cmd_bench(const std::string& sizes, std::size_t repetitions,
                        std::uint64_t seed);

struct TrainArgs {
  std::optional<std::string> config_path;  // default: full-bidrb preset
  std::size_t steps = 500;
  std::uint64_t seed = 7;
  std::optional<double> learning_rate;
  std::optional<std::string> out_dir;      // loss.csv + weights.bin
};
CommandResult cmd_train_toy(const TrainArgs& args);

// Writes to `out_path`, or stdout when empty.
CommandResult cmd_init_config(const std::string& kind, const std::string& out_path,
                              std::optional<std::uint64_t> seed);

// Full argument parsing and dispatch; returns the process exit code.
int run(int argc, char** argv);

}  // namespace bidrn::cli
