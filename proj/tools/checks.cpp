#include "checks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include <json.hpp>

#include "bidrn/autograd.hpp"
#include "bidrn/binarize.hpp"
#include "bidrn/boxnet.hpp"
#include "bidrn/layers.hpp"
#include "bidrn/network.hpp"
#include "bidrn/ops.hpp"

namespace bidrn::cli {
namespace {

using json = nlohmann::ordered_json;

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t case_seed(std::uint64_t seed, std::uint64_t suite, std::uint64_t c) {
  return mix(seed ^ mix(suite * 1000003ULL + c));
}

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Tensor random_tensor(const Shape& s, std::mt19937_64& rng, float lo = -1.5f,
                     float hi = 1.5f) {
  std::uniform_real_distribution<float> u(lo, hi);
  Tensor t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  // exact zeros exercise Sign(0) = +1
  if (t.size() > 3) t[t.size() / 3] = 0.0f;
  return t;
}

json to_json(const Tensor& t) {
  return json{{"shape", {t.shape().batch, t.shape().channels, t.shape().height,
                         t.shape().width}},
              {"values", t.vec()}};
}

int pm1(float v) { return v >= 0.0f ? 1 : -1; }

// +-1 direct convolution; out-of-range cells read as Sign(0) = +1.
std::vector<std::int64_t> direct_pm1_conv(const Tensor& x, const Tensor& w,
                                          std::size_t stride, std::size_t pad,
                                          Shape& out_shape) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  const std::size_t k = ws.height;
  const std::size_t ho = (xs.height + 2 * pad - k) / stride + 1;
  const std::size_t wo = (xs.width + 2 * pad - k) / stride + 1;
  out_shape = Shape{xs.batch, ws.batch, ho, wo};
  std::vector<std::int64_t> out(out_shape.numel());
  std::size_t o = 0;
  for (std::size_t n = 0; n < xs.batch; ++n)
    for (std::size_t oc = 0; oc < ws.batch; ++oc)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          std::int64_t acc = 0;
          for (std::size_t ic = 0; ic < ws.channels; ++ic)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long iy = long(oy * stride + ky) - long(pad);
                const long ix = long(ox * stride + kx) - long(pad);
                const bool inside =
                    iy >= 0 && ix >= 0 && iy < long(xs.height) && ix < long(xs.width);
                const int a = inside ? pm1(x(n, ic, std::size_t(iy), std::size_t(ix))) : 1;
                acc += a * pm1(w(oc, ic, ky, kx));
              }
          out[o++] = acc;
        }
  return out;
}

void record_failure(SuiteResult& r, json detail) {
  ++r.failed;
  if (!r.counterexample) r.counterexample = detail.dump();
}

SuiteResult suite_kernel(std::uint64_t seed, std::size_t cases) {
  SuiteResult r{"kernel"};
  for (std::size_t c = 0; c < cases; ++c) {
    const std::uint64_t cs = case_seed(seed, 1, c);
    std::mt19937_64 rng(cs);
    const std::size_t k = pick(rng, 0, 1) ? 3 : 1;
    const std::size_t stride = pick(rng, 1, 2);
    const std::size_t pad = pick(rng, 0, 1) ? k / 2 : 0;
    const std::size_t cin = pick(rng, 1, 8), cout = pick(rng, 1, 8);
    const std::size_t h = pick(rng, k, 9), w = pick(rng, k, 9);
    const Tensor x = random_tensor(Shape{pick(rng, 1, 2), cin, h, w}, rng);
    const Tensor wt = random_tensor(Shape{cout, cin, k, k}, rng);
    BinaryConv2dParams<float> p("verify.weight", wt, stride, pad);

    auto fail = [&](const std::string& what, std::size_t index, double expected,
                    double got) {
      record_failure(r, json{{"suite", "kernel"}, {"case", c}, {"case_seed", cs},
                             {"check", what}, {"stride", stride}, {"padding", pad},
                             {"index", index}, {"expected", expected}, {"got", got},
                             {"input", to_json(x)}, {"weights", to_json(wt)}});
    };

    Shape os;
    const auto oracle = direct_pm1_conv(x, wt, stride, pad, os);
    const IntAccumulators acc = binary_conv2d_accumulate(x, p);
    if (!(acc.shape == os)) {
      fail("shape", 0, double(os.numel()), double(acc.shape.numel()));
      continue;
    }
    bool ok = true;
    for (std::size_t i = 0; i < oracle.size() && ok; ++i) {
      if (acc.values[i] != oracle[i]) {
        fail("accumulator", i, double(oracle[i]), double(acc.values[i]));
        ok = false;
      }
    }
    if (!ok) continue;

    // post-alpha against the float path on explicitly padded signs
    const Tensor out = binary_conv2d(x, p);
    const Tensor sx = sign_forward(pad2d(x, pad, 0.0f));
    Tensor weff = sign_forward(wt);
    const std::size_t fan = cin * k * k;
    for (std::size_t i = 0; i < weff.size(); ++i) weff[i] *= p.alpha[i / fan];
    const Tensor ref = conv2d_reference(sx, weff, stride, 0);
    const std::size_t plane = os.plane();
    for (std::size_t i = 0; i < ref.size() && ok; ++i) {
      const double a = p.alpha[(i / plane) % cout];
      if (std::abs(double(out[i]) - ref[i]) > 1e-5 * std::max<double>(std::abs(ref[i]), a)) {
        fail("post_alpha", i, ref[i], out[i]);
        ok = false;
      }
    }
    if (ok) ++r.passed;
  }
  return r;
}

SuiteResult suite_packing(std::uint64_t seed, std::size_t cases) {
  SuiteResult r{"packing"};
  for (std::size_t c = 0; c < cases; ++c) {
    const std::uint64_t cs = case_seed(seed, 2, c);
    std::mt19937_64 rng(cs);
    const std::size_t rows = pick(rng, 1, 4), len = pick(rng, 1, 200);
    const Tensor v = random_tensor(Shape{1, 1, rows, len}, rng);
    const PackedBits bits = pack_signs<float>(v.data(), rows, len);
    const std::vector<float> back = unpack_signs<float>(bits);
    auto fail = [&](const std::string& what, double expected, double got) {
      record_failure(r, json{{"suite", "packing"}, {"case", c}, {"case_seed", cs},
                             {"check", what}, {"rows", rows}, {"valid_len", len},
                             {"expected", expected}, {"got", got}, {"values", v.vec()}});
    };
    bool ok = back.size() == v.size();
    if (!ok) fail("unpack_size", double(v.size()), double(back.size()));
    for (std::size_t i = 0; ok && i < v.size(); ++i) {
      if (back[i] != float(pm1(v[i]))) {
        fail("round_trip", pm1(v[i]), back[i]);
        ok = false;
      }
    }
    for (std::size_t row = 0; ok && row < rows; ++row) {
      std::int64_t want = 0;
      for (std::size_t j = 0; j < len; ++j) want += pm1(v[j]) * pm1(v[row * len + j]);
      const std::int64_t got = xnor_popcount_dot(bits, 0, bits, row);
      if (got != want) {
        fail("xnor_dot", double(want), double(got));
        ok = false;
      }
    }
    if (ok) ++r.passed;
  }
  return r;
}

SuiteResult suite_l1(std::uint64_t seed, std::size_t cases) {
  SuiteResult r{"l1"};
  for (std::size_t c = 0; c < cases; ++c) {
    const std::uint64_t cs = case_seed(seed, 3, c);
    std::mt19937_64 rng(cs);
    const std::size_t k = 2 * pick(rng, 0, 2) + 1;
    const std::size_t cin = pick(rng, 1, 8), cout = pick(rng, 1, 8);
    std::normal_distribution<float> nd(0.0f, 1.0f);
    Tensor w(Shape{cout, cin, k, k});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = nd(rng);
    BinaryConv2dParams<float> p("verify.weight", w, 1, 0);
    const Tensor b = binarize_weights(p);
    const std::size_t fan = cin * k * k;
    bool ok = true;
    for (std::size_t oc = 0; oc < cout && ok; ++oc) {
      double latent = 0, bin = 0;
      for (std::size_t j = 0; j < fan; ++j) {
        latent += std::abs(double(w[oc * fan + j]));
        bin += std::abs(double(b[oc * fan + j]));
      }
      const double via_alpha = double(p.alpha[oc]) * double(fan);
      if (p.alpha[oc] < 0 || std::abs(bin - latent) > 1e-5 * latent ||
          std::abs(via_alpha - latent) > 1e-5 * latent) {
        record_failure(r, json{{"suite", "l1"}, {"case", c}, {"case_seed", cs},
                               {"out_channel", oc}, {"latent_l1", latent},
                               {"binarized_l1", bin}, {"alpha", p.alpha[oc]},
                               {"weights", to_json(w)}});
        ok = false;
      }
    }
    if (ok) ++r.passed;
  }
  return r;
}

SuiteResult suite_shapes(std::uint64_t seed, std::size_t cases) {
  SuiteResult r{"shapes"};
  const ModuleKind kinds[] = {ModuleKind::BaseLCR, ModuleKind::DownScale,
                              ModuleKind::FusionUp, ModuleKind::FusionDown,
                              ModuleKind::DownSample};
  const Preact preacts[] = {Preact::Hardtanh, Preact::Relu, Preact::Prelu};
  for (std::size_t c = 0; c < cases; ++c) {
    const std::uint64_t cs = case_seed(seed, 4, c);
    std::mt19937_64 rng(cs);
    const ModuleKind kind = kinds[pick(rng, 0, 4)];
    const Preact preact = preacts[pick(rng, 0, 2)];
    std::size_t cin = pick(rng, 1, 6);
    std::size_t h = pick(rng, 1, 8), w = pick(rng, 1, 8);
    ModuleSpec spec;
    spec.kind = kind;
    std::size_t want_c = cin, want_h = h, want_w = w;
    switch (kind) {
      case ModuleKind::BaseLCR:
        break;
      case ModuleKind::DownScale:
        h = 2 * pick(rng, 1, 4), w = 2 * pick(rng, 1, 4);
        want_h = h / 2, want_w = w / 2;
        spec.spatial_stride = 2;
        break;
      case ModuleKind::FusionUp:
        want_c = 2 * cin;
        break;
      case ModuleKind::FusionDown:
        cin = 2 * pick(rng, 1, 3);
        want_c = cin / 2;
        break;
      case ModuleKind::DownSample: {
        const std::size_t k = pick(rng, 0, 1) ? 4 : 2;
        h = 2 * pick(rng, 1, 4), w = 2 * pick(rng, 1, 4);
        want_c = k * cin, want_h = h / 2, want_w = w / 2;
        spec.spatial_stride = 2;
        break;
      }
    }
    spec.in_channels = cin;
    spec.out_channels = want_c;
    const Shape in{pick(rng, 1, 2), cin, h, w};
    const Shape want{in.batch, want_c, want_h, want_w};
    Initializer init(cs);
    Shape got;
    std::string error;
    try {
      auto m = make_module<float>("verify", spec, preact, init);
      got = module_forward(random_tensor(in, rng), m, preact).shape();
    } catch (const std::exception& e) {
      error = e.what();
    }
    if (error.empty() && got == want) {
      ++r.passed;
    } else {
      record_failure(r, json{{"suite", "shapes"}, {"case", c}, {"case_seed", cs},
                             {"kind", to_string(kind)}, {"preact", to_string(preact)},
                             {"input", in.str()}, {"expected", want.str()},
                             {"got", error.empty() ? got.str() : error}});
    }
  }
  return r;
}

// ---- gradient checks -------------------------------------------------------

using TapeD = ag::Tape<double>;
using Build = std::function<ag::ValueId(TapeD&, const std::vector<ag::ValueId>&)>;

TensorD random_d(const Shape& s, std::mt19937_64& rng, double lo = -1.5, double hi = 1.5,
                 double avoid_band = 0.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  TensorD t(s);
  for (std::size_t i = 0; i < t.size(); ++i) {
    double v;
    do {
      v = u(rng);
    } while (avoid_band > 0 &&
             (std::abs(std::abs(v) - 1.0) < avoid_band || std::abs(v) < avoid_band));
    t[i] = v;
  }
  return t;
}

// Moves affine and statistics parameters away from their identity init.
void jitter(const std::vector<ParameterD*>& params, std::mt19937_64& rng) {
  auto u = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  auto ends = [](const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
  };
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      double& v = p->value[i];
      if (ends(p->name, ".scale")) v = u(0.5, 1.5);
      else if (ends(p->name, ".shift")) v = u(-0.2, 0.2);
      else if (ends(p->name, ".running_mean")) v = u(-0.2, 0.2);
      else if (ends(p->name, ".running_var")) v = u(0.5, 1.5);
      else if (ends(p->name, ".gamma") || ends(p->name, ".zeta")) v = u(-0.1, 0.1);
      else if (ends(p->name, ".beta") || ends(p->name, ".slope")) v = u(0.1, 0.4);
      // keep latent weights away from the |w| kink of alpha
      else if (std::abs(v) < 0.05) v = v < 0 ? -0.05 - u(0, 0.1) : 0.05 + u(0, 0.1);
    }
  }
}

class GradChecker {
 public:
  GradChecker(std::uint64_t seed, double tol) : rng_(seed), tol_(tol) {}

  RuleResult check(const std::string& rule, std::vector<TensorD> inputs,
                   const std::vector<ParameterD*>& params, const Build& build,
                   ag::TapeOptions opts = {true, false, ag::SignMode::Surrogate, false}) {
    RuleResult res{rule};
    // Fixed target offset from the base output keeps L1 away from ties.
    TensorD target;
    {
      TapeD t(with_record(opts, false));
      const TensorD out = t.value(build(t, leaves(t, inputs)));
      target = out;
      std::uniform_real_distribution<double> u(0.5, 1.0);
      for (std::size_t i = 0; i < target.size(); ++i)
        target[i] += (rng_() & 1 ? 1.0 : -1.0) * u(rng_);
    }
    auto loss = [&]() {
      TapeD t(with_record(opts, false));
      return l1_loss(t.value(build(t, leaves(t, inputs))), target);
    };

    for (auto* p : params) p->zero_grad();
    std::vector<TensorD> in_grads;
    {
      TapeD t(with_record(opts, true));
      const auto ids = leaves(t, inputs);
      const ag::ValueId l = ag::l1_loss(t, build(t, ids), target);
      t.backward(l);
      for (std::size_t k = 0; k < ids.size(); ++k) {
        const TensorD* g = t.grad(ids[k]);
        in_grads.push_back(g ? *g : TensorD(inputs[k].shape()));
      }
    }

    auto probe = [&](double& slot, double analytic) {
      const double keep = slot;
      slot = keep + kStep;
      const double up = loss();
      slot = keep - kStep;
      const double down = loss();
      slot = keep;
      const double numeric = (up - down) / (2 * kStep);
      const double err = std::abs(analytic - numeric) /
                         std::max({std::abs(analytic), std::abs(numeric), 1e-2});
      res.worst_error = std::max(res.worst_error, err);
      ++res.checked;
    };
    for (std::size_t k = 0; k < inputs.size(); ++k)
      for (std::size_t i : sample(inputs[k].size())) probe(inputs[k][i], in_grads[k][i]);
    for (auto* p : params) {
      if (!p->trainable) continue;
      const TensorD analytic = p->grad;
      for (std::size_t i : sample(p->value.size())) probe(p->value[i], analytic[i]);
    }
    res.passed = res.worst_error <= tol_;
    return res;
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  static constexpr double kStep = 1e-6;
  static constexpr std::size_t kMaxPerLeaf = 24;

  static ag::TapeOptions with_record(ag::TapeOptions o, bool record) {
    o.record = record;
    return o;
  }

  static std::vector<ag::ValueId> leaves(TapeD& t, const std::vector<TensorD>& inputs) {
    std::vector<ag::ValueId> ids;
    for (const auto& x : inputs) ids.push_back(t.input(x));
    return ids;
  }

  std::vector<std::size_t> sample(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (n > kMaxPerLeaf) {
      std::shuffle(idx.begin(), idx.end(), rng_);
      idx.resize(kMaxPerLeaf);
    }
    return idx;
  }

  std::mt19937_64 rng_;
  double tol_;
};

NetworkConfig gradcheck_network() {
  auto mod = [](ModuleKind k, std::size_t in, std::size_t out, std::size_t s) {
    return ModuleSpec{k, in, out, s};
  };
  using K = ModuleKind;
  NetworkConfig cfg;
  cfg.input_shape = Shape{1, 2, 8, 8};
  cfg.head_out = 3;
  cfg.seed = 11;
  cfg.blocks = {
      BlockSpec{{mod(K::BaseLCR, 2, 2, 1), mod(K::FusionUp, 2, 4, 1)},
                {BlockResidualMode::FullPrecision1x1}},
      BlockSpec{{mod(K::FusionDown, 4, 2, 1), mod(K::DownScale, 2, 2, 2)},
                {BlockResidualMode::Binarized1x1}},
      BlockSpec{{mod(K::DownSample, 2, 4, 2), mod(K::BaseLCR, 4, 4, 1)},
                {BlockResidualMode::FullPrecision1x1}},
  };
  return cfg;
}

}  // namespace

std::vector<SuiteResult> run_verify(std::uint64_t seed, std::size_t cases) {
  return {suite_kernel(seed, cases), suite_packing(seed, cases), suite_l1(seed, cases),
          suite_shapes(seed, cases)};
}

bool GradcheckResult::passed() const {
  if (saturated_ste_grad != 0.0) return false;
  return std::all_of(rules.begin(), rules.end(), [](const auto& r) { return r.passed; });
}

GradcheckResult run_gradcheck(std::uint64_t seed, double tolerance) {
  GradcheckResult out;
  GradChecker gc(seed, tolerance);
  auto& rng = gc.rng();
  auto add = [&](RuleResult r) { out.rules.push_back(std::move(r)); };
  auto x_of = [&](const Shape& s) { return random_d(s, rng, -1.5, 1.5, 0.05); };
  const Shape small{2, 3, 4, 4};

  add(gc.check("sign", {x_of(small)}, {},
               [](TapeD& t, const auto& in) { return ag::sign(t, in[0]); }));
  add(gc.check("hardtanh", {x_of(small)}, {},
               [](TapeD& t, const auto& in) { return ag::hardtanh(t, in[0]); }));
  add(gc.check("relu", {x_of(small)}, {},
               [](TapeD& t, const auto& in) { return ag::relu(t, in[0]); }));
  {
    ParameterD slope("prelu.slope", random_d(Shape{1, 3, 1, 1}, rng, 0.1, 0.4));
    add(gc.check("prelu", {x_of(small)}, {&slope},
                 [&](TapeD& t, const auto& in) { return ag::prelu(t, in[0], slope); }));
  }
  {
    RPReLUParams<double> rp("rprelu", 3);
    jitter({&rp.gamma, &rp.zeta, &rp.beta}, rng);
    add(gc.check("rprelu", {x_of(small)}, {&rp.gamma, &rp.zeta, &rp.beta},
                 [&](TapeD& t, const auto& in) {
                   return ag::rprelu(t, in[0], rp.gamma, rp.zeta, rp.beta);
                 }));
  }
  {
    ParameterD w("conv.weight", random_d(Shape{4, 3, 3, 3}, rng, -1, 1));
    add(gc.check("conv2d", {x_of(Shape{2, 3, 5, 5})}, {&w},
                 [&](TapeD& t, const auto& in) { return ag::conv2d(t, in[0], w, 2, 1); }));
  }
  {
    BinaryConv2dParams<double> p("bconv.weight", random_d(Shape{3, 3, 3, 3}, rng, -1, 1),
                                 1, 1);
    jitter({&p.latent_weights}, rng);
    add(gc.check("binary_conv2d", {x_of(small)}, {&p.latent_weights},
                 [&](TapeD& t, const auto& in) { return ag::binary_conv2d(t, in[0], p); }));
  }
  {
    BinaryConv2dParams<double> p("bdeconv.weight",
                                 random_d(Shape{2, 3, 4, 4}, rng, -1, 1), 2, 1);
    jitter({&p.latent_weights}, rng);
    add(gc.check("binary_deconv2d", {x_of(Shape{1, 3, 3, 3})}, {&p.latent_weights},
                 [&](TapeD& t, const auto& in) {
                   return ag::binary_deconv2d(t, in[0], p, 2);
                 }));
  }
  add(gc.check("avg_pool2d", {x_of(small)}, {},
               [](TapeD& t, const auto& in) { return ag::avg_pool2d(t, in[0], 2, 2); }));
  add(gc.check("global_avg_pool", {x_of(small)}, {},
               [](TapeD& t, const auto& in) { return ag::global_avg_pool(t, in[0]); }));
  add(gc.check("concat_channels", {x_of(small), x_of(Shape{2, 2, 4, 4})}, {},
               [](TapeD& t, const auto& in) {
                 return ag::concat_channels(t, in[0], in[1]);
               }));
  add(gc.check("slice_channels", {x_of(small)}, {},
               [](TapeD& t, const auto& in) { return ag::slice_channels(t, in[0], 1, 2); }));
  add(gc.check("add", {x_of(small), x_of(small)}, {},
               [](TapeD& t, const auto& in) { return ag::add(t, in[0], in[1]); }));
  add(gc.check("scale", {x_of(small)}, {},
               [](TapeD& t, const auto& in) { return ag::scale(t, in[0], -0.7); }));
  {
    BatchNormParams<double> bn("bn", 3);
    jitter({&bn.scale, &bn.shift, &bn.running_mean, &bn.running_var}, rng);
    add(gc.check("batch_norm[inference]", {x_of(small)}, {&bn.scale, &bn.shift},
                 [&](TapeD& t, const auto& in) { return ag::batch_norm(t, in[0], bn); }));
    add(gc.check("batch_norm[training]", {x_of(small)}, {&bn.scale, &bn.shift},
                 [&](TapeD& t, const auto& in) { return ag::batch_norm(t, in[0], bn); },
                 {true, true, ag::SignMode::Surrogate, false}));
  }
  add(gc.check("reshape", {x_of(small)}, {},
               [](TapeD& t, const auto& in) {
                 return ag::reshape(t, in[0], Shape{2, 48, 1, 1});
               }));
  add(gc.check("exp", {x_of(small)}, {},
               [](TapeD& t, const auto& in) { return ag::exp(t, in[0]); }));
  add(gc.check("soft_argmax", {random_d(Shape{2, 4, 3, 5}, rng, -2, 2)}, {},
               [](TapeD& t, const auto& in) { return ag::soft_argmax(t, in[0], 2, 2); }));
  add(gc.check("l1_loss", {x_of(small)}, {},
               [](TapeD&, const auto& in) { return in[0]; }));

  {
    Initializer init(seed);
    auto layer = make_lcr_layer<double>("lcr", 2, 1, init);
    std::vector<ParameterD*> ps{&layer.conv.latent_weights, &layer.rprelu.gamma,
                                &layer.rprelu.zeta,        &layer.rprelu.beta,
                                &layer.bn.scale,           &layer.bn.shift,
                                &layer.bn.running_mean,    &layer.bn.running_var};
    jitter(ps, rng);
    add(gc.check("lcr_layer", {x_of(Shape{1, 2, 4, 4})}, ps,
                 [&](TapeD& t, const auto& in) {
                   return ag::lcr_core(t, ag::hardtanh(t, in[0]), layer);
                 }));
  }
  {
    auto net = build_network<double>(gradcheck_network());
    const auto ps = net.parameters();
    jitter(ps, rng);
    add(gc.check("bidrb_network_3block", {x_of(Shape{2, 2, 8, 8})}, ps,
                 [&](TapeD& t, const auto& in) {
                   return ag::network_forward(t, in[0], net);
                 }));
  }
  {
    BoxNetConfig bc;
    bc.in_channels = 3;
    bc.joints = 2;
    bc.deconv_layers = 1;
    bc.deconv_channels = 3;
    bc.hidden = 4;
    bc.boxes = 2;
    bc.seed = seed;
    auto box = make_boxnet<double>(bc);
    const auto ps = box.parameters();
    jitter(ps, rng);
    add(gc.check("box_head", {x_of(Shape{1, 3, 3, 3})}, ps,
                 [&](TapeD& t, const auto& in) {
                   const auto ids = ag::box_head(t, in[0], box);
                   const std::size_t b = t.value(ids.center).shape().batch;
                   const Shape flat{b, bc.boxes * 2, 1, 1};
                   return ag::concat_channels(t, ag::reshape(t, ids.center, flat),
                                              ag::reshape(t, ids.size, flat));
                 }));
  }

  // Saturated inputs in hard mode: the STE must block every gradient.
  {
    TensorD sat(Shape{1, 2, 3, 3});
    const double vals[] = {1.0, -1.0, 1.5, -2.0, 3.0, -1.25};
    for (std::size_t i = 0; i < sat.size(); ++i) sat[i] = vals[i % 6];
    BinaryConv2dParams<double> p("probe.weight", random_d(Shape{2, 2, 3, 3}, rng, -1, 1),
                                 1, 1);
    TapeD t({true, false, ag::SignMode::Hard, false});
    const ag::ValueId x = t.input(sat);
    const ag::ValueId s = ag::sign(t, x);
    const ag::ValueId y = ag::binary_conv2d(t, x, p);
    const ag::ValueId l = ag::add(t, ag::global_avg_pool(t, ag::reshape(t, s, Shape{1, 18, 1, 1})),
                                  ag::global_avg_pool(t, ag::reshape(t, y, Shape{1, 18, 1, 1})));
    TensorD target(Shape{1, 18, 1, 1}, -10.0);
    const ag::ValueId loss = ag::l1_loss(t, l, target);
    t.backward(loss);
    double worst = 0;
    if (const TensorD* g = t.grad(x)) {
      for (std::size_t i = 0; i < g->size(); ++i) worst = std::max(worst, std::abs((*g)[i]));
    }
    out.saturated_ste_grad = worst;
  }
  return out;
}

}  // namespace bidrn::cli
