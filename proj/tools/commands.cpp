#include "commands.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "bidrn/autograd.hpp"
#include "bidrn/binarize.hpp"
#include "bidrn/checkpoint.hpp"
#include "bidrn/config.hpp"
#include "bidrn/errors.hpp"
#include "bidrn/network.hpp"
#include "bidrn/stats.hpp"
#include "bidrn/train.hpp"
#include "checks.hpp"

namespace bidrn::cli {
namespace {

// Restores a fault flag when the command returns.
struct FaultScope {
  void (*set)(bool);
  explicit FaultScope(void (*s)(bool), bool on) : set(s) { set(on); }
  ~FaultScope() { set(false); }
};

CommandResult usage_error(const std::string& msg) {
  return CommandResult{kUsage, "", "error: " + msg + "\n"};
}

}  // namespace

CommandResult cmd_verify(std::uint64_t seed, std::size_t cases, bool fault_mask) {
  FaultScope fault(&testing::set_tail_mask_fault, fault_mask);
  const auto suites = run_verify(seed, cases);
  CommandResult r;
  std::ostringstream out;
  std::size_t passed = 0, failed = 0;
  const SuiteResult* first_bad = nullptr;
  for (const auto& s : suites) {
    out << s.name << ": " << s.passed << " passed, " << s.failed << " failed\n";
    passed += s.passed;
    failed += s.failed;
    if (s.failed && !first_bad) first_bad = &s;
  }
  out << "total: " << passed << " passed, " << failed << " failed\n";
  if (first_bad) {
    out << "first counterexample (" << first_bad->name << "):\n"
        << *first_bad->counterexample << "\n";
    r.exit_code = kCheckFailed;
  }
  r.out = out.str();
  return r;
}

CommandResult cmd_gradcheck(std::uint64_t seed, bool fault_ste) {
  FaultScope fault(&ag::testing::set_ste_fault, fault_ste);
  const GradcheckResult g = run_gradcheck(seed);
  std::ostringstream out;
  out << std::scientific;
  out.precision(3);
  std::string failing;
  for (const auto& rule : g.rules) {
    out << rule.rule << ": worst_rel_error " << rule.worst_error << " over " << rule.checked
        << " entries " << (rule.passed ? "ok" : "FAIL") << "\n";
    if (!rule.passed) failing += (failing.empty() ? "" : ", ") + rule.rule;
  }
  out << "ste_saturated_grad: " << g.saturated_ste_grad
      << (g.saturated_ste_grad == 0.0 ? " (exactly 0)" : " (nonzero)") << "\n";
  if (g.saturated_ste_grad != 0.0) {
    failing += (failing.empty() ? "" : ", ") + std::string("ste_saturated");
  }
  CommandResult r;
  r.out = out.str();
  if (!g.passed()) {
    r.exit_code = kCheckFailed;
    r.err = "gradient check failed: " + failing + "\n";
  }
  return r;
}

CommandResult cmd_stats(const std::string& config_path) {
  if (config_path.empty()) return usage_error("stats needs --config");
  try {
    const NetworkConfig cfg = load_config(config_path);
    return CommandResult{kOk, stats_json(model_stats(cfg)), ""};
  } catch (const Error& e) {
    return CommandResult{kUsage, "", std::string("error: ") + e.what() + "\n"};
  }
}

CommandResult cmd_bench(const std::string& sizes, std::size_t repetitions,
                        std::uint64_t seed) {
  std::vector<BenchShape> shapes;
  try {
    shapes = bench_shapes(sizes);
  } catch (const ConfigError& e) {
    return usage_error(e.what());
  }
  if (repetitions == 0) return usage_error("--reps must be >= 1");
  const auto rows = bench_conv(shapes, repetitions, seed);
  CommandResult r{kOk, bench_csv(rows), ""};
  for (const auto& row : rows) {
    if (!row.checksums_stable) {
      r.exit_code = kCheckFailed;
      r.err = "checksums changed across repetitions\n";
    }
  }
  return r;
}

CommandResult cmd_train_toy(const TrainArgs& args) {
  NetworkConfig cfg;
  try {
    cfg = args.config_path ? load_config(*args.config_path) : preset_config("full-bidrb");
  } catch (const Error& e) {
    return CommandResult{kUsage, "", std::string("error: ") + e.what() + "\n"};
  }
  TrainOptions opt;
  opt.steps = args.steps;
  opt.seed = args.seed;
  if (args.learning_rate) opt.learning_rate = *args.learning_rate;
  if (opt.learning_rate < 0) return usage_error("--lr must be >= 0");

  CommandResult r;
  std::vector<LossRecord> trace;
  Network<float> net;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    net = build_network<float>(cfg);
    trace = train_toy(net, opt);
  } catch (const TrainingError& e) {
    return CommandResult{kCheckFailed, "", std::string("training failed: ") + e.what() + "\n"};
  } catch (const ConfigError& e) {
    return CommandResult{kUsage, "", std::string("error: ") + e.what() + "\n"};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.out = loss_trace_csv(trace);

  std::ostringstream err;
  err << "steps " << trace.size() << ", seconds " << secs;
  if (!trace.empty()) {
    const double a = smoothed_initial(trace), b = smoothed_final(trace);
    err << ", smoothed loss " << a << " -> " << b << " (ratio " << b / a << ")";
  }
  err << "\n";
  if (args.out_dir) {
    try {
      std::filesystem::create_directories(*args.out_dir);
      const std::string dir = *args.out_dir;
      std::ofstream(dir + "/loss.csv") << r.out;
      save_checkpoint(dir + "/weights.bin", net.parameters());
      err << "wrote " << dir << "/loss.csv and " << dir << "/weights.bin\n";
    } catch (const std::exception& e) {
      return CommandResult{kUsage, r.out, std::string("error: ") + e.what() + "\n"};
    }
  }
  r.err = err.str();
  return r;
}

CommandResult cmd_init_config(const std::string& kind, const std::string& out_path,
                              std::optional<std::uint64_t> seed) {
  NetworkConfig cfg;
  try {
    cfg = preset_config(kind);
  } catch (const ConfigError& e) {
    std::string names;
    for (const auto& n : preset_names()) names += " " + n;
    return usage_error(std::string(e.what()) + "; choose one of:" + names);
  }
  if (seed) cfg.seed = *seed;
  const std::string text = serialize_config(cfg) + "\n";
  if (out_path.empty()) return CommandResult{kOk, text, ""};
  std::ofstream f(out_path);
  if (!f || !(f << text)) return usage_error("cannot write '" + out_path + "'");
  return CommandResult{kOk, "", "wrote " + out_path + "\n"};
}

int run(int argc, char** argv) {
  CLI::App app{"bidrn: 1-bit network kit"};
  app.require_subcommand(1);

  std::uint64_t seed = 7;
  std::size_t cases = 300;
  std::string config;
  std::size_t steps = 500;
  std::string sizes = "small";
  std::size_t reps = 5;
  std::string out;
  std::string fault;
  double lr = -1;
  std::string kind;

  auto* verify = app.add_subcommand("verify", "kernel, packing, L1 and shape-law suites");
  verify->add_option("--seed", seed);
  verify->add_option("--cases", cases, "randomized cases per suite")->check(CLI::PositiveNumber);
  verify->add_option("--inject-fault", fault)->group("");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every backward rule");
  grad->add_option("--seed", seed);
  grad->add_option("--inject-fault", fault)->group("");

  auto* stats = app.add_subcommand("stats", "params/ops accounting as JSON");
  stats->add_option("--config,config", config, "network config JSON")->required();

  auto* bench = app.add_subcommand("bench", "packed vs reference convolution timings (CSV)");
  bench->add_option("--sizes", sizes, "small | medium | large");
  bench->add_option("--reps", reps);
  bench->add_option("--seed", seed);

  auto* train = app.add_subcommand("train-toy", "train on the synthetic teacher task");
  train->add_option("--config", config);
  train->add_option("--steps", steps);
  train->add_option("--seed", seed);
  train->add_option("--lr", lr);
  train->add_option("--out", out, "directory for loss.csv and weights.bin");

  auto* init = app.add_subcommand("init-config", "write a preset network config");
  init->add_option("kind", kind, "base-lcr | full-bidrb | ablation-step-0..4")->required();
  init->add_option("--out", out);
  init->add_option("--seed", seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  auto bad_fault = [&](const char* allowed) {
    return !fault.empty() && fault != allowed;
  };
  CommandResult r;
  if (*verify) {
    if (bad_fault("mask")) r = usage_error("unknown fault '" + fault + "'");
    else r = cmd_verify(seed, cases, fault == "mask");
  } else if (*grad) {
    if (bad_fault("ste")) r = usage_error("unknown fault '" + fault + "'");
    else r = cmd_gradcheck(seed, fault == "ste");
  } else if (*stats) {
    r = cmd_stats(config);
  } else if (*bench) {
    r = cmd_bench(sizes, reps, seed);
  } else if (*train) {
    TrainArgs a;
    if (!config.empty()) a.config_path = config;
    a.steps = steps;
    a.seed = seed;
    if (train->count("--lr")) a.learning_rate = lr;
    if (!out.empty()) a.out_dir = out;
    r = cmd_train_toy(a);
  } else if (*init) {
    r = cmd_init_config(kind, out,
                        init->count("--seed") ? std::optional<std::uint64_t>(seed)
                                              : std::nullopt);
  }
  std::cout << r.out << std::flush;
  std::cerr << r.err << std::flush;
  return r.exit_code;
}

}  // namespace bidrn::cli
