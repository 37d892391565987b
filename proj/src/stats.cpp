#include "bidrn/stats.hpp"

#include <algorithm>
#include <chrono>
#include <random>
#include <sstream>

#include <json.hpp>

#include "bidrn/binarize.hpp"
#include "bidrn/errors.hpp"
#include "bidrn/ops.hpp"
#include "bidrn/parallel.hpp"

namespace bidrn {

LayerCount count_layer(const LayerDescriptor& l, const Shape& in) {
  auto bad = [&](const std::string& why) {
    return ConfigError("layer '" + l.name + "': " + why);
  };
  if (l.in_channels == 0) throw bad("in_channels must be >= 1");
  if (in.channels != l.in_channels) {
    throw bad("expects " + std::to_string(l.in_channels) + " channels, input " + in.str());
  }
  LayerCount c;
  c.binarized = l.binarized;
  c.output = in;
  const std::uint64_t plane = in.height * in.width;
  switch (l.kind) {
    case LayerKind::Conv:
    case LayerKind::Deconv: {
      if (l.out_channels == 0 || l.kernel == 0 || l.stride == 0) {
        throw bad("out_channels, kernel and stride must be >= 1");
      }
      try {
        if (l.kind == LayerKind::Conv) {
          c.output.height = conv_out_extent(in.height, l.kernel, l.stride, l.padding);
          c.output.width = conv_out_extent(in.width, l.kernel, l.stride, l.padding);
        } else {
          c.output.height = deconv_out_extent(in.height, l.kernel, l.stride, l.padding);
          c.output.width = deconv_out_extent(in.width, l.kernel, l.stride, l.padding);
        }
      } catch (const DimensionError& e) {
        throw bad(e.what());
      }
      c.output.channels = l.out_channels;
      c.params = std::uint64_t(l.out_channels) * l.in_channels * l.kernel * l.kernel;
      c.ops = c.params * c.output.height * c.output.width;
      break;
    }
    case LayerKind::Linear:
      if (l.out_channels == 0) throw bad("out_channels must be >= 1");
      if (plane != 1) throw bad("linear layers take 1x1 inputs, got " + in.str());
      c.output.channels = l.out_channels;
      c.params = std::uint64_t(l.in_channels) * l.out_channels;
      c.ops = c.params;
      break;
    case LayerKind::BatchNorm:
      c.params = 2ULL * l.in_channels;
      c.ops = 2ULL * l.in_channels * plane;
      break;
    case LayerKind::RPReLU:
      c.params = 3ULL * l.in_channels;
      c.ops = 2ULL * l.in_channels * plane;
      break;
    case LayerKind::PReLU:
      c.params = l.in_channels;
      c.ops = std::uint64_t(l.in_channels) * plane;
      break;
  }
  if (l.binarized && l.kind != LayerKind::Conv && l.kind != LayerKind::Deconv &&
      l.kind != LayerKind::Linear) {
    throw bad("only conv, deconv and linear layers can be binarized");
  }
  c.output.batch = in.batch;
  return c;
}

std::vector<LayerEntry> describe_network(const NetworkConfig& cfg) {
  const ShapeTrace trace = validate(cfg, 1);
  std::vector<LayerEntry> out;
  Shape x{1, cfg.input_shape.channels, cfg.input_shape.height, cfg.input_shape.width};
  if (cfg.stem.out_channels > 0) {
    out.push_back({{"stem.conv", LayerKind::Conv, false, x.channels,
                    cfg.stem.out_channels, 3, cfg.stem.stride, 1},
                   x});
    out.push_back({{"stem.bn", LayerKind::BatchNorm, false, cfg.stem.out_channels,
                    cfg.stem.out_channels},
                   trace.stem_out});
  }
  for (std::size_t b = 0; b < cfg.blocks.size(); ++b) {
    const BlockSpec& bs = cfg.blocks[b];
    Shape in = trace.block_in[b];
    for (std::size_t m = 0; m < bs.modules.size(); ++m) {
      const ModuleSpec& ms = bs.modules[m];
      const Shape mod_out = trace.module_out[b][m];
      const std::string p = "block" + std::to_string(b) + ".module" + std::to_string(m);
      if (cfg.preact == Preact::Prelu) {
        out.push_back({{p + ".preact", LayerKind::PReLU, false, in.channels, in.channels},
                       in});
      }
      const std::size_t bc =
          ms.kind == ModuleKind::FusionDown ? in.channels / 2 : in.channels;
      const Shape branch_in{1, bc, in.height, in.width};
      const Shape branch_out{1, bc, mod_out.height, mod_out.width};
      for (std::size_t k = 0; k < ms.branches(); ++k) {
        const std::string q = p + ".branch" + std::to_string(k);
        out.push_back({{q + ".conv", LayerKind::Conv, true, bc, bc, 3, ms.spatial_stride, 1},
                       branch_in});
        out.push_back({{q + ".rprelu", LayerKind::RPReLU, false, bc, bc}, branch_out});
        out.push_back({{q + ".bn", LayerKind::BatchNorm, false, bc, bc}, branch_out});
      }
      if (ms.branches() > 1) {
        out.push_back({{p + ".fuse_bn", LayerKind::BatchNorm, false, mod_out.channels,
                        mod_out.channels},
                       mod_out});
      }
      in = mod_out;
    }
    if (bs.block_residual.mode != BlockResidualMode::None) {
      const Shape& bin = trace.block_in[b];
      const Shape& bout = trace.block_out[b];
      out.push_back({{"block" + std::to_string(b) + ".br", LayerKind::Conv,
                      bs.block_residual.mode == BlockResidualMode::Binarized1x1,
                      bin.channels, bout.channels, 1, 1, 0},
                     Shape{1, bin.channels, bout.height, bout.width}});
    }
  }
  const Shape feat = cfg.blocks.empty() ? trace.stem_out : trace.block_out.back();
  out.push_back({{"head.linear", LayerKind::Linear, false, feat.channels, cfg.head_out},
                 Shape{1, feat.channels, 1, 1}});
  return out;
}

void ModelStats::add(const LayerCount& c) {
  if (c.binarized) {
    params_bin_latent += c.params;
    ops_bin += c.ops;
  } else {
    params_fp += c.params;
    ops_fp += c.ops;
  }
}

double ModelStats::params_effective_M() const {
  return (double(params_fp) + double(params_bin_latent) / 32.0) / 1e6;
}

double ModelStats::ops_effective_G() const {
  return (double(ops_fp) + double(ops_bin) / 64.0) / 1e9;
}

ModelStats model_stats(const std::vector<LayerEntry>& layers) {
  ModelStats s;
  for (const auto& e : layers) s.add(count_layer(e.layer, e.input));
  return s;
}

ModelStats model_stats(const NetworkConfig& cfg) {
  return model_stats(describe_network(cfg));
}

std::string stats_json(const ModelStats& s) {
  nlohmann::ordered_json j;
  j["params_fp"] = s.params_fp;
  j["params_bin_latent"] = s.params_bin_latent;
  j["ops_fp"] = s.ops_fp;
  j["ops_bin"] = s.ops_bin;
  j["params_effective_M"] = s.params_effective_M();
  j["ops_effective_G"] = s.ops_effective_G();
  return j.dump(2) + "\n";
}

std::vector<BenchShape> bench_shapes(const std::string& sizes) {
  if (sizes == "small") {
    return {{16, 16, 16, 16, 3, 1}, {32, 32, 16, 16, 3, 1}, {64, 64, 8, 8, 3, 1},
            {256, 64, 8, 8, 3, 1}};
  }
  if (sizes == "medium") {
    return {{64, 64, 28, 28, 3, 1}, {128, 128, 14, 14, 3, 1}, {256, 256, 14, 14, 3, 1},
            {256, 256, 14, 14, 3, 2}};
  }
  if (sizes == "large") {
    return {{64, 64, 56, 56, 3, 1}, {128, 128, 28, 28, 3, 1}, {256, 256, 28, 28, 3, 1},
            {512, 512, 14, 14, 3, 1}};
  }
  throw ConfigError("unknown --sizes '" + sizes + "' (small, medium, large)");
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double checksum(const Tensor& t) {
  double s = 0;
  for (std::size_t i = 0; i < t.size(); ++i) s += t[i];
  return s;
}

template <typename Fn>
double time_ms(Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

std::vector<BenchRow> bench_conv(const std::vector<BenchShape>& shapes,
                                 std::size_t repetitions, std::uint64_t seed) {
  if (repetitions == 0) throw ConfigError("repetitions must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  const std::size_t workers = max_threads();
  std::vector<BenchRow> rows;
  for (const BenchShape& bs : shapes) {
    const std::size_t pad = bs.kernel / 2;
    Tensor x(Shape{1, bs.in_channels, bs.height, bs.width});
    Tensor w(Shape{bs.out_channels, bs.in_channels, bs.kernel, bs.kernel});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = u(rng);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = u(rng);
    BinaryConv2dParams<float> p("bench.weight", w, bs.stride, pad);

    BenchRow r;
    r.shape = bs;
    r.threads = workers;
    const std::size_t ho = conv_out_extent(bs.height, bs.kernel, bs.stride, pad);
    const std::size_t wo = conv_out_extent(bs.width, bs.kernel, bs.stride, pad);
    r.reduction_len = bs.in_channels * bs.kernel * bs.kernel;
    r.ops = std::uint64_t(bs.out_channels) * r.reduction_len * ho * wo;
    const std::uint64_t rows_total = bs.out_channels + ho * wo;
    r.dense_bytes = rows_total * r.reduction_len * sizeof(float);
    r.packed_bytes = rows_total * words_for(r.reduction_len) * sizeof(std::uint64_t);

    std::vector<double> ref_t, bin_t, mt_t;
    set_max_threads(1);
    for (std::size_t k = 0; k < repetitions; ++k) {
      Tensor a, b;
      ref_t.push_back(time_ms([&] { a = conv2d_reference(x, w, bs.stride, pad); }));
      bin_t.push_back(time_ms([&] { b = binary_conv2d(x, p); }));
      const double ca = checksum(a), cb = checksum(b);
      if (k == 0) {
        r.reference_checksum = ca;
        r.packed_checksum = cb;
      } else if (ca != r.reference_checksum || cb != r.packed_checksum) {
        r.checksums_stable = false;
      }
    }
    set_max_threads(workers);
    for (std::size_t k = 0; k < repetitions; ++k) {
      Tensor b;
      mt_t.push_back(time_ms([&] { b = binary_conv2d(x, p); }));
      if (checksum(b) != r.packed_checksum) r.checksums_stable = false;
    }
    set_max_threads(0);
    r.reference_ms = median(ref_t);
    r.packed_ms = median(bin_t);
    r.packed_mt_ms = median(mt_t);
    rows.push_back(r);
  }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out << "c_in,c_out,h,w,k,stride,ops,reduction_len,dense_bytes,packed_bytes,"
         "footprint_ratio,reference_ms,packed_ms,speedup,threads,packed_mt_ms,"
         "reference_checksum,packed_checksum,checksums_stable\n";
  out.setf(std::ios::fixed);
  for (const auto& r : rows) {
    const auto& s = r.shape;
    out.precision(3);
    out << s.in_channels << ',' << s.out_channels << ',' << s.height << ',' << s.width
        << ',' << s.kernel << ',' << s.stride << ',' << r.ops << ',' << r.reduction_len
        << ',' << r.dense_bytes << ',' << r.packed_bytes << ','
        << double(r.dense_bytes) / double(r.packed_bytes) << ',' << r.reference_ms << ','
        << r.packed_ms << ',' << r.reference_ms / std::max(r.packed_ms, 1e-9) << ','
        << r.threads << ',' << r.packed_mt_ms << ',';
    out.precision(6);
    out << r.reference_checksum << ',' << r.packed_checksum << ','
        << (r.checksums_stable ? "true" : "false") << '\n';
  }
  return out.str();
}

}  // namespace bidrn
