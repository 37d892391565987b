#include "bidrn/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bidrn/errors.hpp"

namespace bidrn {

using json = nlohmann::ordered_json;

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

const char* to_string(ModuleKind kind) {
  switch (kind) {
    case ModuleKind::BaseLCR: return "base_lcr";
    case ModuleKind::DownScale: return "down_scale";
    case ModuleKind::FusionUp: return "fusion_up";
    case ModuleKind::FusionDown: return "fusion_down";
    case ModuleKind::DownSample: return "down_sample";
  }
  return "?";
}

const char* to_string(BlockResidualMode mode) {
  switch (mode) {
    case BlockResidualMode::None: return "none";
    case BlockResidualMode::FullPrecision1x1: return "fp1x1";
    case BlockResidualMode::Binarized1x1: return "bin1x1";
  }
  return "?";
}

const char* to_string(Preact preact) {
  switch (preact) {
    case Preact::Hardtanh: return "hardtanh";
    case Preact::Relu: return "relu";
    case Preact::Prelu: return "prelu";
  }
  return "?";
}

ModuleKind parse_module_kind(const std::string& s) {
  const std::string k = lower(s);
  if (k == "base_lcr" || k == "baselcr" || k == "lcr") return ModuleKind::BaseLCR;
  if (k == "down_scale" || k == "dscr") return ModuleKind::DownScale;
  if (k == "fusion_up" || k == "fur") return ModuleKind::FusionUp;
  if (k == "fusion_down" || k == "fdr") return ModuleKind::FusionDown;
  if (k == "down_sample" || k == "dsar") return ModuleKind::DownSample;
  throw ConfigError("unknown module kind '" + s + "'");
}

BlockResidualMode parse_block_residual(const std::string& s) {
  const std::string k = lower(s);
  if (k == "none") return BlockResidualMode::None;
  if (k == "fp1x1") return BlockResidualMode::FullPrecision1x1;
  if (k == "bin1x1") return BlockResidualMode::Binarized1x1;
  throw ConfigError("unknown block_residual '" + s + "'");
}

Preact parse_preact(const std::string& s) {
  const std::string k = lower(s);
  if (k == "hardtanh") return Preact::Hardtanh;
  if (k == "relu") return Preact::Relu;
  if (k == "prelu") return Preact::Prelu;
  throw ConfigError("unknown preact '" + s + "'");
}

std::size_t ModuleSpec::branches() const {
  switch (kind) {
    case ModuleKind::BaseLCR:
    case ModuleKind::DownScale:
      return 1;
    case ModuleKind::FusionUp:
    case ModuleKind::FusionDown:
      return 2;
    case ModuleKind::DownSample:
      return in_channels == 0 ? 0 : out_channels / in_channels;
  }
  return 0;
}

void validate(const ModuleSpec& spec) {
  const std::size_t in = spec.in_channels;
  const std::size_t out = spec.out_channels;
  const std::size_t s = spec.spatial_stride;
  auto fail = [&](const std::string& law) {
    throw ConfigError(std::string(to_string(spec.kind)) + " requires " + law +
                      ", got in=" + std::to_string(in) + " out=" +
                      std::to_string(out) + " stride=" + std::to_string(s));
  };
  if (in == 0 || out == 0) fail("positive channel counts");
  switch (spec.kind) {
    case ModuleKind::BaseLCR:
      if (out != in || s != 1) fail("out = in, stride 1");
      break;
    case ModuleKind::DownScale:
      if (out != in || s != 2) fail("out = in, stride 2");
      break;
    case ModuleKind::FusionUp:
      if (out != 2 * in || s != 1) fail("out = 2*in, stride 1");
      break;
    case ModuleKind::FusionDown:
      if (in % 2 != 0 || out != in / 2 || s != 1) fail("even in, out = in/2, stride 1");
      break;
    case ModuleKind::DownSample:
      if ((out != 2 * in && out != 4 * in) || s != 2) fail("out = 2*in or 4*in, stride 2");
      break;
  }
}

Shape module_output_shape(const ModuleSpec& spec, const Shape& input) {
  validate(spec);
  if (input.channels != spec.in_channels) {
    throw DimensionError(std::string(to_string(spec.kind)) + " expects " +
                         std::to_string(spec.in_channels) + " channels, input " +
                         input.str());
  }
  Shape out = input;
  out.channels = spec.out_channels;
  if (spec.spatial_stride == 2) {
    if (input.height % 2 != 0 || input.width % 2 != 0) {
      throw DimensionError(std::string(to_string(spec.kind)) +
                           " needs even spatial extents, input " + input.str());
    }
    out.height /= 2;
    out.width /= 2;
  }
  return out;
}

ShapeTrace validate(const NetworkConfig& cfg, std::size_t batch) {
  Shape x{batch, cfg.input_shape.channels, cfg.input_shape.height,
          cfg.input_shape.width};
  try {
    bidrn::validate(x);
  } catch (const DimensionError& e) {
    throw ConfigError(std::string("input_shape: ") + e.what());
  }
  if (cfg.head_out == 0) throw ConfigError("head_out must be >= 1");
  ShapeTrace trace;
  if (cfg.stem.out_channels > 0) {
    if (cfg.stem.stride == 0) throw ConfigError("stem: stride must be >= 1");
    x.channels = cfg.stem.out_channels;
    x.height = (x.height + 2 - 3) / cfg.stem.stride + 1;
    x.width = (x.width + 2 - 3) / cfg.stem.stride + 1;
  }
  trace.stem_out = x;
  for (std::size_t b = 0; b < cfg.blocks.size(); ++b) {
    const BlockSpec& block = cfg.blocks[b];
    if (block.modules.empty()) {
      throw ConfigError("block " + std::to_string(b) + ": no modules");
    }
    trace.block_in.push_back(x);
    trace.module_out.emplace_back();
    for (std::size_t m = 0; m < block.modules.size(); ++m) {
      try {
        x = module_output_shape(block.modules[m], x);
      } catch (const Error& e) {
        throw ConfigError("block " + std::to_string(b) + " module " +
                          std::to_string(m) + ": " + e.what());
      }
      trace.module_out.back().push_back(x);
    }
    const Shape& in = trace.block_in.back();
    if (block.block_residual.mode != BlockResidualMode::None &&
        (in.height % x.height != 0 || in.width % x.width != 0 ||
         in.height / x.height != in.width / x.width)) {
      throw ConfigError("block " + std::to_string(b) +
                        ": block residual cannot map " + in.str() + " to " +
                        x.str());
    }
    trace.block_out.push_back(x);
  }
  return trace;
}

namespace {

template <typename T>
T field(const json& j, const std::string& key, const std::string& path) {
  if (!j.contains(key)) throw ConfigError(path + "." + key + ": missing");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(path + "." + key + ": " + e.what());
  }
}

template <typename T>
T field_or(const json& j, const std::string& key, const std::string& path,
           T fallback) {
  return j.contains(key) ? field<T>(j, key, path) : fallback;
}

ModuleSpec parse_module(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  ModuleSpec m;
  try {
    m.kind = parse_module_kind(field<std::string>(j, "kind", path));
  } catch (const ConfigError& e) {
    throw ConfigError(path + ".kind: " + e.what());
  }
  m.in_channels = field<std::size_t>(j, "in_channels", path);
  m.out_channels = field<std::size_t>(j, "out_channels", path);
  m.spatial_stride = field<std::size_t>(j, "stride", path);
  try {
    validate(m);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return m;
}

}  // namespace

NetworkConfig parse_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
  NetworkConfig cfg;
  const auto dims = field<std::vector<std::size_t>>(doc, "input_shape", "config");
  if (dims.size() != 3) {
    throw ConfigError("config.input_shape: expected [C, H, W]");
  }
  cfg.input_shape = Shape{1, dims[0], dims[1], dims[2]};
  try {
    cfg.preact = parse_preact(field_or<std::string>(doc, "preact", "config", "hardtanh"));
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config.preact: ") + e.what());
  }
  if (doc.contains("stem")) {
    const json& s = doc["stem"];
    if (!s.is_object()) throw ConfigError("config.stem: expected an object");
    cfg.stem.out_channels = field<std::size_t>(s, "out_channels", "config.stem");
    cfg.stem.stride = field_or<std::size_t>(s, "stride", "config.stem", 1);
  }
  cfg.head_out = field_or<std::size_t>(doc, "head_out", "config", cfg.head_out);
  cfg.seed = field_or<std::uint64_t>(doc, "seed", "config", 0);
  if (!doc.contains("blocks") || !doc["blocks"].is_array()) {
    throw ConfigError("config.blocks: missing or not an array");
  }
  const json& blocks = doc["blocks"];
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string path = "config.blocks[" + std::to_string(b) + "]";
    const json& jb = blocks[b];
    if (!jb.is_object()) throw ConfigError(path + ": expected an object");
    BlockSpec block;
    if (jb.contains("modules")) {
      if (!jb["modules"].is_array()) throw ConfigError(path + ".modules: not an array");
      for (std::size_t m = 0; m < jb["modules"].size(); ++m) {
        block.modules.push_back(parse_module(
            jb["modules"][m], path + ".modules[" + std::to_string(m) + "]"));
      }
    } else {
      block.modules.push_back(parse_module(jb, path));
    }
    try {
      block.block_residual.mode = parse_block_residual(
          field_or<std::string>(jb, "block_residual", path, "none"));
    } catch (const ConfigError& e) {
      throw ConfigError(path + ".block_residual: " + e.what());
    }
    cfg.blocks.push_back(std::move(block));
  }
  validate(cfg);
  return cfg;
}

NetworkConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string serialize_config(const NetworkConfig& cfg) {
  json doc;
  doc["input_shape"] = {cfg.input_shape.channels, cfg.input_shape.height,
                        cfg.input_shape.width};
  doc["preact"] = to_string(cfg.preact);
  if (cfg.stem.out_channels > 0) {
    doc["stem"] = {{"out_channels", cfg.stem.out_channels},
                   {"stride", cfg.stem.stride}};
  }
  json blocks = json::array();
  for (const BlockSpec& b : cfg.blocks) {
    json jb;
    json modules = json::array();
    for (const ModuleSpec& m : b.modules) {
      modules.push_back({{"kind", to_string(m.kind)},
                         {"in_channels", m.in_channels},
                         {"out_channels", m.out_channels},
                         {"stride", m.spatial_stride}});
    }
    jb["modules"] = std::move(modules);
    jb["block_residual"] = to_string(b.block_residual.mode);
    blocks.push_back(std::move(jb));
  }
  doc["blocks"] = std::move(blocks);
  doc["head_out"] = cfg.head_out;
  doc["seed"] = cfg.seed;
  return doc.dump(2) + "\n";
}

namespace {

ModuleSpec mod(ModuleKind kind, std::size_t in, std::size_t out, std::size_t stride) {
  return ModuleSpec{kind, in, out, stride};
}

NetworkConfig ablation_step(int step) {
  using K = ModuleKind;
  NetworkConfig cfg;
  cfg.input_shape = Shape{1, 3, 32, 32};
  cfg.stem = StemSpec{8, 2};
  cfg.seed = 7;
  const auto fp = BlockResidualSpec{BlockResidualMode::FullPrecision1x1};
  // Three two-module blocks; each step swaps one position for the next
  // dimension-matching module so depth stays fixed.
  BlockSpec b0{{mod(K::BaseLCR, 8, 8, 1), mod(K::BaseLCR, 8, 8, 1)}, fp};
  BlockSpec b1{{mod(K::BaseLCR, 8, 8, 1), mod(K::BaseLCR, 8, 8, 1)}, fp};
  BlockSpec b2{{mod(K::BaseLCR, 8, 8, 1), mod(K::BaseLCR, 8, 8, 1)}, fp};
  if (step >= 1) b0.modules[0] = mod(K::DownScale, 8, 8, 2);
  if (step >= 2) {
    b1.modules[0] = mod(K::FusionUp, 8, 16, 1);
    b1.modules[1] = mod(K::BaseLCR, 16, 16, 1);
    b2.modules = {mod(K::BaseLCR, 16, 16, 1), mod(K::BaseLCR, 16, 16, 1)};
  }
  if (step >= 3) {
    b1.modules[1] = mod(K::FusionDown, 16, 8, 1);
    b2.modules = {mod(K::BaseLCR, 8, 8, 1), mod(K::BaseLCR, 8, 8, 1)};
  }
  if (step >= 4) {
    b2.modules = {mod(K::DownSample, 8, 16, 2), mod(K::BaseLCR, 16, 16, 1)};
  }
  cfg.blocks = {b0, b1, b2};
  return cfg;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"base-lcr",       "full-bidrb",     "ablation-step-0", "ablation-step-1",
          "ablation-step-2", "ablation-step-3", "ablation-step-4"};
}

NetworkConfig preset_config(const std::string& name) {
  if (name == "full-bidrb") return ablation_step(4);
  if (name == "base-lcr") {
    NetworkConfig cfg;
    cfg.input_shape = Shape{1, 3, 32, 32};
    cfg.stem = StemSpec{8, 2};
    cfg.seed = 7;
    cfg.blocks = {BlockSpec{{mod(ModuleKind::BaseLCR, 8, 8, 1)}, {}}};
    return cfg;
  }
  const std::string prefix = "ablation-step-";
  if (name.rfind(prefix, 0) == 0 && name.size() == prefix.size() + 1) {
    const int step = name.back() - '0';
    if (step >= 0 && step <= 4) return ablation_step(step);
  }
  throw ConfigError("unknown preset '" + name + "'");
}

}  // namespace bidrn
