// Prints one PASS/FAIL line per acceptance criterion; exit code 1 if any fail.
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

#include "bidrn/binarize.hpp"
#include "bidrn/boxnet.hpp"
#include "bidrn/layers.hpp"
#include "bidrn/network.hpp"
#include "bidrn/ops.hpp"
#include "bidrn/parallel.hpp"
#include "bidrn/stats.hpp"
#include "bidrn/train.hpp"
#include "checks.hpp"
#include "oracles.hpp"

using namespace bidrn;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

Outcome kernel_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  std::size_t configs = 0, acc_mismatch = 0;
  double worst_rel = 0;
  for (; configs < 320; ++configs) {
    const std::size_t k = pick(0, 2) == 0 ? 1 : 3, stride = pick(1, 2);
    const std::size_t pad = pick(0, 1) ? k / 2 : 0;
    const std::size_t cin = pick(1, 12), cout = pick(1, 8);
    Tensor x = oracle::random_tensor<float>(Shape{pick(1, 2), cin, pick(k, 9), pick(k, 9)}, rng);
    Tensor w = oracle::random_tensor<float>(Shape{cout, cin, k, k}, rng);
    BinaryConv2dParams<float> p("w", w, stride, pad);
    const auto acc = binary_conv2d_accumulate(x, p);
    const auto ref = oracle::pm1_conv(x, w, stride, pad);
    for (std::size_t i = 0; i < ref.size(); ++i) acc_mismatch += acc.values[i] != ref[i];

    Tensor weff = sign_forward(w);
    for (std::size_t i = 0; i < weff.size(); ++i) weff[i] *= p.alpha[i / (cin * k * k)];
    const Tensor fref =
        conv2d_reference(sign_forward(pad2d(x, pad, 0.0f)), weff, stride, 0);
    const Tensor y = binary_conv2d(x, p);
    const std::size_t plane = y.shape().plane();
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double scale = std::max<double>(std::abs(fref[i]), p.alpha[(i / plane) % cout]);
      worst_rel = std::max(worst_rel, std::abs(double(y[i]) - fref[i]) / scale);
    }
  }
  const double secs = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu configs, %zu accumulator mismatches, worst rel %.2e, %.2fs",
                configs, acc_mismatch, worst_rel, secs);
  return {acc_mismatch == 0 && worst_rel <= 1e-5 && secs < 60, buf};
}

Outcome ste_fidelity() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double h = 1e-5;
  double worst = 0;
  std::size_t n = 0;
  TensorD pts(Shape{1, 1, 1, 1000});
  while (n < 1000) {
    const double x = u(rng);
    if (std::abs(x) < 2 * h || std::abs(std::abs(x) - 1) < 2 * h) continue;
    pts[n++] = x;
  }
  const TensorD g = ste_grad(pts);
  for (std::size_t i = 0; i < 1000; ++i) {
    const double fd =
        (oracle::surrogate(pts[i] + h) - oracle::surrogate(pts[i] - h)) / (2 * h);
    worst = std::max(worst, std::abs(g[i] - fd));
  }
  const TensorD sat = ste_grad(TensorD(Shape{1, 1, 1, 6}, {1.0, -1.0, 1.5, -3.0, 1e3, -1e-3 - 1}));
  bool zero = true;
  for (double v : sat.vec()) zero &= v == 0.0;
  char buf[120];
  std::snprintf(buf, sizeof buf, "worst |fd - ste| %.2e at 1000 points, saturated exactly 0: %s",
                worst, zero ? "yes" : "no");
  return {worst <= 1e-4 && zero, buf};
}

Outcome gradient_check() {
  const auto r = cli::run_gradcheck(1, 1e-3);
  double worst = 0;
  bool has_network = false;
  for (const auto& rule : r.rules) {
    worst = std::max(worst, rule.worst_error);
    has_network |= rule.rule.find("3block") != std::string::npos && rule.passed;
  }
  char buf[120];
  std::snprintf(buf, sizeof buf, "%zu rules incl. 3-block network, worst rel %.2e",
                r.rules.size(), worst);
  return {r.passed() && has_network, buf};
}

Outcome shape_laws() {
  std::mt19937_64 rng(99);
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  std::size_t checked = 0, bad = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t c = 2 * pick(1, 4), h = 2 * pick(1, 4), w = 2 * pick(1, 4);
    const std::size_t n = pick(1, 2);
    Tensor x = oracle::random_tensor<float>(Shape{n, c, h, w}, rng, -2, 2);
    struct Case {
      ModuleSpec spec;
      Shape want;
    };
    const Case cases[] = {
        {{ModuleKind::BaseLCR, c, c, 1}, Shape{n, c, h, w}},
        {{ModuleKind::DownScale, c, c, 2}, Shape{n, c, h / 2, w / 2}},
        {{ModuleKind::FusionUp, c, 2 * c, 1}, Shape{n, 2 * c, h, w}},
        {{ModuleKind::FusionDown, c, c / 2, 1}, Shape{n, c / 2, h, w}},
        {{ModuleKind::DownSample, c, 2 * c, 2}, Shape{n, 2 * c, h / 2, w / 2}},
        {{ModuleKind::DownSample, c, 4 * c, 2}, Shape{n, 4 * c, h / 2, w / 2}},
    };
    Initializer init{static_cast<std::uint64_t>(trial)};
    for (const auto& cs : cases) {
      auto m = make_module<float>("m", cs.spec, Preact::Hardtanh, init);
      const Tensor y = module_forward(x, m);
      ++checked;
      bad += !(y.shape() == cs.want) || !(module_output_shape(cs.spec, x.shape()) == cs.want);
    }
  }
  return {bad == 0, std::to_string(checked) + " module forwards, " + std::to_string(bad) +
                        " shape violations"};
}

Outcome accounting() {
  // Hand-summed layer totals of configs/tiny.json.
  const std::uint64_t fp_p = 1224, bin_p = 6912, fp_o = 87808, bin_o = 276480;
  const ModelStats s = model_stats(load_config(BIDRN_SOURCE_DIR "/configs/tiny.json"));
  bool ok = s.params_fp == fp_p && s.params_bin_latent == bin_p && s.ops_fp == fp_o &&
            s.ops_bin == bin_o;
  ok &= s.params_effective_M() * 1e6 == double(fp_p) + double(bin_p) / 32.0;
  ok &= s.ops_effective_G() * 1e9 == double(fp_o) + double(bin_o) / 64.0;
  // 64 -> 64 binarized 3x3 conv: 36864 latent params, 1152 effective.
  ModelStats one;
  one.add(count_layer({"spot", LayerKind::Conv, true, 64, 64, 3, 1, 1}, Shape{1, 64, 8, 8}));
  ok &= one.params_bin_latent == 36864 && one.params_effective_M() * 1e6 == 1152.0;
  char buf[160];
  std::snprintf(buf, sizeof buf, "params %.0f effective (%lu fp + %lu/32), spot 36864 -> %.0f",
                s.params_effective_M() * 1e6, (unsigned long)s.params_fp,
                (unsigned long)s.params_bin_latent, one.params_effective_M() * 1e6);
  return {ok, buf};
}

Outcome footprint() {
  std::mt19937_64 rng(5);
  double worst = 1e9;
  for (std::size_t len : {2048u, 2049u, 2304u, 4608u, 9216u}) {
    const std::size_t rows = 16;
    Tensor v = oracle::random_tensor<float>(Shape{1, 1, rows, len}, rng);
    const PackedBits b = pack_signs<float>(v.data(), rows, len);
    const std::size_t dense = rows * len * sizeof(float);
    const std::size_t packed = b.words.size() * sizeof(std::uint64_t);
    if (packed != b.bytes()) return {false, "byte accounting mismatch"};
    worst = std::min(worst, double(dense) / double(packed));
  }
  char buf[80];
  std::snprintf(buf, sizeof buf, "smallest dense/packed ratio %.2f for L >= 2048", worst);
  return {worst >= 30.0, buf};
}

Outcome toy_training() {
  set_max_threads(1);
  auto net = build_network<float>(load_config(BIDRN_SOURCE_DIR "/configs/tiny.json"));
  TrainOptions o;
  o.steps = 500;
  o.seed = 7;
  const auto t0 = Clock::now();
  const auto trace = train_toy(net, o);
  const double secs = seconds_since(t0);
  set_max_threads(0);
  const double a = smoothed_initial(trace, 20), b = smoothed_final(trace, 20);
  char buf[120];
  std::snprintf(buf, sizeof buf, "smoothed loss %.4f -> %.4f (ratio %.3f), %.1fs on 1 thread",
                a, b, b / a, secs);
  return {trace.size() == 500 && b <= 0.5 * a && secs < 120, buf};
}

Outcome boxnet_contract() {
  bool ok = true;
  for (bool bin : {true, false})
    for (std::size_t k : {0u, 1u, 2u}) {
      BoxNetConfig cfg;
      cfg.binarized = bin;
      cfg.binary_linears = k;
      const auto p = make_boxnet<float>(cfg);
      ok &= p.full_precision_linears() == 1 && p.binary_linears.size() == k;
    }
  std::mt19937_64 rng(8);
  double worst_arg = 0, worst_norm = 0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t depth = 1 + t % 3;
    BasicHeatmap<double> h{2, depth,
                           oracle::random_tensor<double>(Shape{2, 2 * depth, 6, 5}, rng, -5, 5)};
    const TensorD xyz = soft_argmax(h);
    const auto norm = normalize(h);
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t j = 0; j < 2; ++j) {
        std::vector<double> cells;
        double sum = 0;
        for (std::size_t z = 0; z < depth; ++z)
          for (std::size_t i = 0; i < 30; ++i) {
            const std::size_t idx = ((n * 2 * depth) + j * depth + z) * 30 + i;
            cells.push_back(h.values[idx]);
            sum += norm.values[idx];
          }
        const auto e = oracle::softmax_expectation(cells, depth, 6, 5);
        for (std::size_t q = 0; q < 3; ++q)
          worst_arg = std::max(worst_arg, std::abs(xyz(n, j, q, 0) - e[q]));
        worst_norm = std::max(worst_norm, std::abs(sum - 1.0));
      }
  }
  char buf[120];
  std::snprintf(buf, sizeof buf, "one fp linear in 6 builds, soft-argmax err %.1e, norm err %.1e",
                worst_arg, worst_norm);
  return {ok && worst_arg <= 1e-6 && worst_norm <= 1e-5, buf};
}

// Signs seen by every binarized convolution of a two-module block.
std::vector<float> block_signs(const Tensor& probe, Preact preact) {
  Initializer init(31);
  const ModuleSpec s{ModuleKind::BaseLCR, 4, 4, 1};
  auto m0 = make_module<float>("m0", s, preact, init);
  auto m1 = make_module<float>("m1", s, preact, init);
  auto pre = [&](const Tensor& x) {
    return preact == Preact::Relu ? relu_forward(x) : hardtanh_forward(x);
  };
  std::vector<float> out;
  const Tensor s0 = sign_forward(pre(probe));
  const Tensor s1 = sign_forward(pre(module_forward(probe, m0, preact)));
  out.insert(out.end(), s0.vec().begin(), s0.vec().end());
  out.insert(out.end(), s1.vec().begin(), s1.vec().end());
  return out;
}

Outcome relu_probe() {
  std::mt19937_64 rng(3);
  const Tensor probe = oracle::random_tensor<float>(Shape{2, 4, 6, 6}, rng, 0.0, 2.0);
  const auto relu_signs = block_signs(probe, Preact::Relu);
  const auto ht_signs = block_signs(probe, Preact::Hardtanh);
  const auto neg = [](const std::vector<float>& v) {
    return std::count(v.begin(), v.end(), -1.0f);
  };
  const bool relu_all_ones = neg(relu_signs) == 0;
  const bool ht_mixed = neg(ht_signs) > 0;
  return {relu_all_ones && ht_mixed,
          "relu: " + std::to_string(neg(relu_signs)) + " of " +
              std::to_string(relu_signs.size()) + " signs are -1; hardtanh: " +
              std::to_string(neg(ht_signs))};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"kernel oracle equivalence", kernel_oracle},
      {"STE fidelity", ste_fidelity},
      {"end-to-end gradient check", gradient_check},
      {"shape laws", shape_laws},
      {"accounting convention", accounting},
      {"compression footprint", footprint},
      {"toy training", toy_training},
      {"BoxNet structural contract", boxnet_contract},
      {"pre-activation failure-mode probe", relu_probe},
  };
  int failed = 0, idx = 0;
  for (const auto& [name, fn] : criteria) {
    ++idx;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", idx, name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
