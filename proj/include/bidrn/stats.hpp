#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bidrn/config.hpp"
#include "bidrn/tensor.hpp"

namespace bidrn {

enum class LayerKind { Conv, Deconv, Linear, BatchNorm, RPReLU, PReLU };

struct LayerDescriptor {
  std::string name;
  LayerKind kind = LayerKind::Conv;
  bool binarized = false;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;  // Conv/Deconv/Linear; equals in for the rest
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

struct LayerCount {
  std::uint64_t params = 0;
  std::uint64_t ops = 0;  // one multiply-accumulate = one op
  bool binarized = false;
  Shape output;
};

// Counts for one sample. Conv: Co*Ci*K^2 params, params*Ho*Wo ops. Deconv:
// same, over the output extent. Linear: in*out for both. BatchNorm: 2C params,
// 2 ops per element. RPReLU: 3C params, 2 ops per element. PReLU: C params,
// 1 op per element. Throws ConfigError on an invalid descriptor.
LayerCount count_layer(const LayerDescriptor& layer, const Shape& input);

struct LayerEntry {
  LayerDescriptor layer;
  Shape input;
};

// Every counted layer of the network the config builds, with its input shape
// (batch 1). Pooling, additions and Hardtanh carry no parameters and are not
// counted.
std::vector<LayerEntry> describe_network(const NetworkConfig& cfg);

struct ModelStats {
  std::uint64_t params_fp = 0;
  std::uint64_t params_bin_latent = 0;
  std::uint64_t ops_fp = 0;
  std::uint64_t ops_bin = 0;

  void add(const LayerCount& c);
  // (params_fp + params_bin_latent / 32) in millions.
  double params_effective_M() const;
  // (ops_fp + ops_bin / 64) in billions.
  double ops_effective_G() const;
};

ModelStats model_stats(const std::vector<LayerEntry>& layers);
ModelStats model_stats(const NetworkConfig& cfg);

// {params_fp, params_bin_latent, ops_fp, ops_bin, params_effective_M,
//  ops_effective_G}, two-space indent, trailing newline.
std::string stats_json(const ModelStats& s);

struct BenchShape {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
};

// "small", "medium" or "large"; ConfigError otherwise.
std::vector<BenchShape> bench_shapes(const std::string& sizes);

struct BenchRow {
  BenchShape shape;
  std::uint64_t ops = 0;
  std::size_t reduction_len = 0;  // Ci*K^2
  std::uint64_t dense_bytes = 0;  // weight rows + im2col rows, 32-bit
  std::uint64_t packed_bytes = 0;
  double reference_ms = 0;        // median, one thread
  double packed_ms = 0;           // median, one thread
  double packed_mt_ms = 0;        // median, max_threads() workers
  std::size_t threads = 1;
  double reference_checksum = 0;
  double packed_checksum = 0;
  bool checksums_stable = true;   // identical across repetitions
};

std::vector<BenchRow> bench_conv(const std::vector<BenchShape>& shapes,
                                 std::size_t repetitions, std::uint64_t seed);
std::string bench_csv(const std::vector<BenchRow>& rows);

}  // namespace bidrn
