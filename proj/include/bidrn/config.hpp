#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "bidrn/tensor.hpp"

namespace bidrn {

enum class ModuleKind { BaseLCR, DownScale, FusionUp, FusionDown, DownSample };
enum class BlockResidualMode { None, FullPrecision1x1, Binarized1x1 };
enum class Preact { Hardtanh, Relu, Prelu };

const char* to_string(ModuleKind kind);
const char* to_string(BlockResidualMode mode);
const char* to_string(Preact preact);
ModuleKind parse_module_kind(const std::string& s);
BlockResidualMode parse_block_residual(const std::string& s);
Preact parse_preact(const std::string& s);

// One residual module. Shape laws:
//   BaseLCR     C -> C,    stride 1
//   DownScale   C -> C,    stride 2
//   FusionUp    C -> 2C,   stride 1
//   FusionDown  C -> C/2,  stride 1 (C even)
//   DownSample  C -> kC,   stride 2 (k parallel branches, k in {2, 4})
struct ModuleSpec {
  ModuleKind kind = ModuleKind::BaseLCR;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t spatial_stride = 1;

  // Number of parallel LCR branches this module owns.
  std::size_t branches() const;
};

// Throws ConfigError if the spec breaks its kind's shape law.
void validate(const ModuleSpec& spec);
// Output C x H x W (batch preserved); throws DimensionError on odd extents
// for stride-2 modules.
Shape module_output_shape(const ModuleSpec& spec, const Shape& input);

struct BlockResidualSpec {
  BlockResidualMode mode = BlockResidualMode::None;
};

struct BlockSpec {
  std::vector<ModuleSpec> modules;
  BlockResidualSpec block_residual;
};

// Optional full-precision 3x3 convolution + BatchNorm ahead of the blocks.
struct StemSpec {
  std::size_t out_channels = 0;  // 0 disables the stem
  std::size_t stride = 1;
};

struct NetworkConfig {
  Shape input_shape{1, 3, 32, 32};  // batch is ignored
  Preact preact = Preact::Hardtanh;
  StemSpec stem;
  std::vector<BlockSpec> blocks;
  // Global average pool + full-precision linear to this many outputs.
  std::size_t head_out = 16;
  std::uint64_t seed = 0;
};

// Per-block input/output shapes for a given batch size. Throws ConfigError
// naming the offending block index if shapes do not chain.
struct ShapeTrace {
  Shape stem_out;
  std::vector<Shape> block_in;
  std::vector<Shape> block_out;
  std::vector<std::vector<Shape>> module_out;
};
ShapeTrace validate(const NetworkConfig& cfg, std::size_t batch = 1);

// JSON document:
// { "input_shape": [C, H, W], "preact": "hardtanh"|"relu"|"prelu",
//   "stem": {"out_channels": n, "stride": s},            (optional)
//   "blocks": [ {kind, in_channels, out_channels, stride, block_residual}
//             | {"modules": [{kind, in_channels, out_channels, stride}, ...],
//                "block_residual": "none"|"fp1x1"|"bin1x1"} ],
//   "head_out": n,                                        (optional)
//   "seed": n }
// Parse errors name the offending field path or JSON line/column.
NetworkConfig parse_config(const std::string& json_text);
NetworkConfig load_config(const std::string& path);
std::string serialize_config(const NetworkConfig& cfg);

// Presets: "base-lcr", "full-bidrb", "ablation-step-0" .. "ablation-step-4"
// (BaseLCR, +DScR, +FUR, +FDR, +DSaR at fixed depth).
NetworkConfig preset_config(const std::string& name);
std::vector<std::string> preset_names();

}  // namespace bidrn
