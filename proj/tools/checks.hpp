#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace bidrn::cli {

struct SuiteResult {
  std::string name;
  std::size_t passed = 0;
  std::size_t failed = 0;
  // JSON object describing the first failing case.
  std::optional<std::string> counterexample;
};

// kernel: packed binary conv vs a direct +-1 convolution, and post-alpha vs
// the float reference. packing: pack/unpack round trip and xnor dot vs a
// direct dot. l1: alpha * fan_in equals the latent L1 norm. shapes: module
// shape laws on random valid specs.
std::vector<SuiteResult> run_verify(std::uint64_t seed, std::size_t cases);

struct RuleResult {
  std::string rule;
  double worst_error = 0;  // |a - n| / max(|a|, |n|, 1e-2)
  std::size_t checked = 0;
  bool passed = true;
};

struct GradcheckResult {
  std::vector<RuleResult> rules;
  // Largest |gradient| reaching saturated Sign inputs in hard mode.
  double saturated_ste_grad = 0;
  bool passed() const;
};

GradcheckResult run_gradcheck(std::uint64_t seed, double tolerance = 1e-3);

}  // namespace bidrn::cli
