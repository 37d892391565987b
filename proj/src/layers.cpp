#include "bidrn/layers.hpp"

#include <cmath>

#include "bidrn/errors.hpp"

namespace bidrn {

template <typename Real>
BasicTensor<Real> Initializer::kaiming_uniform(const Shape& shape,
                                               std::size_t fan_in) {
  const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
  return uniform<Real>(shape, -bound, bound);
}

template <typename Real>
BasicTensor<Real> Initializer::uniform(const Shape& shape, float lo, float hi) {
  std::uniform_real_distribution<float> dist(lo, hi);
  BasicTensor<Real> out(shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<Real>(dist(rng_));
  return out;
}

template <typename Real>
RPReLUParams<Real>::RPReLUParams(const std::string& prefix, std::size_t channels)
    : gamma(prefix + ".gamma", BasicTensor<Real>(Shape{1, channels, 1, 1})),
      zeta(prefix + ".zeta", BasicTensor<Real>(Shape{1, channels, 1, 1})),
      beta(prefix + ".beta", BasicTensor<Real>(Shape{1, channels, 1, 1}, Real(0.25))) {}

template <typename Real>
BasicTensor<Real> rprelu_forward(const BasicTensor<Real>& o,
                                 const RPReLUParams<Real>& p) {
  const Shape& s = o.shape();
  if (p.channels() != s.channels) {
    throw DimensionError("rprelu has " + std::to_string(p.channels()) +
                         " channels, input " + s.str());
  }
  BasicTensor<Real> out(s);
  for (std::size_t n = 0; n < s.batch; ++n)
    for (std::size_t c = 0; c < s.channels; ++c) {
      const Real g = p.gamma.value[c];
      const Real z = p.zeta.value[c];
      const Real b = p.beta.value[c];
      for (std::size_t i = 0; i < s.plane(); ++i) {
        const std::size_t idx = (n * s.channels + c) * s.plane() + i;
        const Real v = o[idx];
        out[idx] = v > g ? v - g + z : b * (v - g) + z;
      }
    }
  return out;
}

template <typename Real>
LcrLayer<Real> make_lcr_layer(const std::string& prefix, std::size_t channels,
                              std::size_t stride, Initializer& init) {
  const Shape ws{channels, channels, 3, 3};
  return LcrLayer<Real>{
      BinaryConv2dParams<Real>(prefix + ".conv.weight",
                               init.kaiming_uniform<Real>(ws, channels * 9),
                               stride, 1),
      RPReLUParams<Real>(prefix + ".rprelu", channels),
      BatchNormParams<Real>(prefix + ".bn", channels)};
}

template <typename Real>
ResidualModule<Real> make_module(const std::string& prefix, const ModuleSpec& spec,
                                 Preact preact, Initializer& init) {
  validate(spec);
  ResidualModule<Real> m;
  m.spec = spec;
  if (preact == Preact::Prelu) {
    m.preact_slope.emplace(prefix + ".preact.slope",
                           BasicTensor<Real>(Shape{1, spec.in_channels, 1, 1},
                                             Real(0.25)));
  }
  const std::size_t k = spec.branches();
  // Each branch keeps its own channel count equal on both sides so the
  // local shortcut always lines up.
  const std::size_t branch_channels =
      spec.kind == ModuleKind::FusionDown ? spec.in_channels / 2 : spec.in_channels;
  for (std::size_t i = 0; i < k; ++i) {
    m.branches.push_back(make_lcr_layer<Real>(
        prefix + ".branch" + std::to_string(i), branch_channels,
        spec.spatial_stride, init));
  }
  if (k > 1) m.fuse_bn.emplace(prefix + ".fuse_bn", spec.out_channels);
  return m;
}

template <typename Real>
BlockResidual<Real> make_block_residual(const std::string& prefix,
                                        BlockResidualMode mode, const Shape& in,
                                        const Shape& target, Initializer& init) {
  BlockResidual<Real> br;
  br.mode = mode;
  if (mode == BlockResidualMode::None) return br;
  if (target.height == 0 || in.height % target.height != 0 ||
      in.width % target.width != 0 ||
      in.height / target.height != in.width / target.width) {
    throw DimensionError("block residual cannot map " + in.str() + " to " +
                         target.str());
  }
  br.pool = in.height / target.height;
  const Shape ws{target.channels, in.channels, 1, 1};
  auto w = init.kaiming_uniform<Real>(ws, in.channels);
  if (mode == BlockResidualMode::FullPrecision1x1) {
    br.fp_weight.emplace(prefix + ".br.weight", std::move(w));
  } else {
    br.bin_conv.emplace(prefix + ".br.weight", std::move(w), 1, 0);
  }
  return br;
}

namespace ag {

template <typename Real>
ValueId preactivate(Tape<Real>& t, ValueId x, Preact preact,
                    Parameter<Real>* slope) {
  switch (preact) {
    case Preact::Hardtanh:
      return hardtanh(t, x);
    case Preact::Relu:
      return relu(t, x);
    case Preact::Prelu:
      if (slope == nullptr) {
        throw ConfigError("prelu pre-activation needs a slope parameter");
      }
      return prelu(t, x, *slope);
  }
  return x;
}

template <typename Real>
ValueId lcr_core(Tape<Real>& t, ValueId a_f, LcrLayer<Real>& layer) {
  const Shape& in = t.value(a_f).shape();
  ValueId shortcut = a_f;
  if (layer.stride() == 2) {
    if (in.height % 2 != 0 || in.width % 2 != 0) {
      throw DimensionError("stride-2 local residual needs even extents, input " +
                           in.str());
    }
    shortcut = avg_pool2d(t, a_f, 2, 2);
  } else if (layer.stride() != 1) {
    throw DimensionError("local residual supports stride 1 or 2");
  }
  const ValueId o = binary_conv2d(t, a_f, layer.conv);
  const ValueId r = rprelu(t, o, layer.rprelu.gamma, layer.rprelu.zeta,
                           layer.rprelu.beta);
  return batch_norm(t, add(t, r, shortcut), layer.bn);
}

template <typename Real>
ValueId module_core(Tape<Real>& t, ValueId a_f, ResidualModule<Real>& m) {
  const Shape in = t.value(a_f).shape();
  module_output_shape(m.spec, in);  // shape law check
  switch (m.spec.kind) {
    case ModuleKind::BaseLCR:
    case ModuleKind::DownScale:
      return lcr_core(t, a_f, m.branches.at(0));
    case ModuleKind::FusionUp: {
      const ValueId o1 = lcr_core(t, a_f, m.branches.at(0));
      const ValueId o2 = lcr_core(t, a_f, m.branches.at(1));
      return batch_norm(t, concat_channels(t, o1, o2), *m.fuse_bn);
    }
    case ModuleKind::FusionDown: {
      const std::size_t half = in.channels / 2;
      const ValueId x1 = slice_channels(t, a_f, 0, half);
      const ValueId x2 = slice_channels(t, a_f, half, half);
      const ValueId o1 = lcr_core(t, x1, m.branches.at(0));
      const ValueId o2 = lcr_core(t, x2, m.branches.at(1));
      return batch_norm(t, add(t, o1, o2), *m.fuse_bn);
    }
    case ModuleKind::DownSample: {
      ValueId acc = lcr_core(t, a_f, m.branches.at(0));
      for (std::size_t i = 1; i < m.branches.size(); ++i) {
        acc = concat_channels(t, acc, lcr_core(t, a_f, m.branches[i]));
      }
      return batch_norm(t, acc, *m.fuse_bn);
    }
  }
  return a_f;
}

template <typename Real>
ValueId module_forward(Tape<Real>& t, ValueId x, ResidualModule<Real>& m,
                       Preact preact) {
  Parameter<Real>* slope = m.preact_slope ? &*m.preact_slope : nullptr;
  return module_core(t, preactivate(t, x, preact, slope), m);
}

template <typename Real>
ValueId block_residual(Tape<Real>& t, ValueId x, BlockResidual<Real>& br) {
  if (br.mode == BlockResidualMode::None) {
    throw ContractError("block residual mode is none");
  }
  ValueId y = x;
  if (br.pool > 1) y = avg_pool2d(t, y, br.pool, br.pool);
  if (br.mode == BlockResidualMode::FullPrecision1x1) {
    return conv2d(t, y, *br.fp_weight, 1, 0);
  }
  return binary_conv2d(t, y, *br.bin_conv);
}

template <typename Real>
ValueId bidrb(Tape<Real>& t, ValueId x, Block<Real>& block, Preact preact) {
  if (block.modules.empty()) throw ConfigError("block has no modules");
  ResidualModule<Real>& first = block.modules.front();
  Parameter<Real>* slope = first.preact_slope ? &*first.preact_slope : nullptr;
  const ValueId a_f = preactivate(t, x, preact, slope);
  ValueId main = module_core(t, a_f, first);
  for (std::size_t i = 1; i < block.modules.size(); ++i) {
    main = module_forward(t, main, block.modules[i], preact);
  }
  if (block.residual.mode == BlockResidualMode::None) return main;
  return add(t, main, block_residual(t, a_f, block.residual));
}

}  // namespace ag

namespace {

template <typename Real, typename Fn>
BasicTensor<Real> run_detached(const BasicTensor<Real>& x, ag::TapeOptions mode,
                               Fn&& fn) {
  mode.record = false;
  ag::Tape<Real> t(mode);
  const ag::ValueId out = fn(t, t.input(x));
  return t.value(out);
}

}  // namespace

template <typename Real>
BasicTensor<Real> lcr_forward(const BasicTensor<Real>& x, LcrLayer<Real>& layer,
                              Preact preact, ag::TapeOptions mode) {
  return run_detached(x, mode, [&](ag::Tape<Real>& t, ag::ValueId in) {
    Parameter<Real> slope("preact.slope",
                          BasicTensor<Real>(Shape{1, x.shape().channels, 1, 1},
                                            Real(0.25)));
    return ag::lcr_core(t, ag::preactivate(t, in, preact, &slope), layer);
  });
}

template <typename Real>
BasicTensor<Real> down_scale_residual_forward(const BasicTensor<Real>& x,
                                              LcrLayer<Real>& layer,
                                              ag::TapeOptions mode) {
  if (layer.stride() != 2) throw DimensionError("down-scale layer must have stride 2");
  return lcr_forward(x, layer, Preact::Hardtanh, mode);
}

template <typename Real>
BasicTensor<Real> fusion_up_residual_forward(const BasicTensor<Real>& x,
                                             LcrLayer<Real>& a, LcrLayer<Real>& b,
                                             BatchNormParams<Real>& fuse_bn,
                                             ag::TapeOptions mode) {
  return run_detached(x, mode, [&](ag::Tape<Real>& t, ag::ValueId in) {
    const ag::ValueId a_f = ag::hardtanh(t, in);
    const ag::ValueId o1 = ag::lcr_core(t, a_f, a);
    const ag::ValueId o2 = ag::lcr_core(t, a_f, b);
    if (!(t.value(o1).shape() == t.value(o2).shape())) {
      throw DimensionError("fusion-up branches disagree: " +
                           t.value(o1).shape().str() + " vs " +
                           t.value(o2).shape().str());
    }
    return ag::batch_norm(t, ag::concat_channels(t, o1, o2), fuse_bn);
  });
}

template <typename Real>
BasicTensor<Real> fusion_down_residual_forward(const BasicTensor<Real>& x,
                                               LcrLayer<Real>& a,
                                               LcrLayer<Real>& b,
                                               BatchNormParams<Real>& fuse_bn,
                                               ag::TapeOptions mode) {
  const std::size_t c = x.shape().channels;
  if (c % 2 != 0) {
    throw DimensionError("fusion-down needs an even channel count, input " +
                         x.shape().str());
  }
  return run_detached(x, mode, [&](ag::Tape<Real>& t, ag::ValueId in) {
    const ag::ValueId a_f = ag::hardtanh(t, in);
    const ag::ValueId o1 = ag::lcr_core(t, ag::slice_channels(t, a_f, 0, c / 2), a);
    const ag::ValueId o2 = ag::lcr_core(t, ag::slice_channels(t, a_f, c / 2, c / 2), b);
    return ag::batch_norm(t, ag::add(t, o1, o2), fuse_bn);
  });
}

template <typename Real>
BasicTensor<Real> down_sample_residual_forward(const BasicTensor<Real>& x,
                                               std::span<LcrLayer<Real>> branches,
                                               BatchNormParams<Real>& fuse_bn,
                                               ag::TapeOptions mode) {
  if (branches.empty()) throw DimensionError("down-sample needs at least one branch");
  const Shape& s = x.shape();
  if (s.height % 2 != 0 || s.width % 2 != 0) {
    throw DimensionError("down-sample needs even spatial extents, input " + s.str());
  }
  return run_detached(x, mode, [&](ag::Tape<Real>& t, ag::ValueId in) {
    const ag::ValueId a_f = ag::hardtanh(t, in);
    ag::ValueId acc = ag::lcr_core(t, a_f, branches[0]);
    for (std::size_t i = 1; i < branches.size(); ++i) {
      acc = ag::concat_channels(t, acc, ag::lcr_core(t, a_f, branches[i]));
    }
    return ag::batch_norm(t, acc, fuse_bn);
  });
}

template <typename Real>
BasicTensor<Real> module_forward(const BasicTensor<Real>& x, ResidualModule<Real>& m,
                                 Preact preact, ag::TapeOptions mode) {
  return run_detached(x, mode, [&](ag::Tape<Real>& t, ag::ValueId in) {
    return ag::module_forward(t, in, m, preact);
  });
}

template <typename Real>
BasicTensor<Real> block_residual_forward(const BasicTensor<Real>& x,
                                         BlockResidual<Real>& br,
                                         const Shape& target_shape,
                                         ag::TapeOptions mode) {
  const Shape& s = x.shape();
  const std::size_t out_c = br.fp_weight ? br.fp_weight->value.shape().batch
                            : br.bin_conv ? br.bin_conv->out_channels()
                                          : 0;
  if (br.mode == BlockResidualMode::None || br.pool == 0 ||
      s.height % br.pool != 0 || s.width % br.pool != 0 ||
      !(Shape{s.batch, out_c, s.height / br.pool, s.width / br.pool} == target_shape)) {
    throw DimensionError("block residual cannot map " + s.str() + " to " +
                         target_shape.str());
  }
  return run_detached(x, mode, [&](ag::Tape<Real>& t, ag::ValueId in) {
    return ag::block_residual(t, in, br);
  });
}

template <typename Real>
BasicTensor<Real> bidrb_forward(const BasicTensor<Real>& x, Block<Real>& block,
                                Preact preact, ag::TapeOptions mode) {
  return run_detached(x, mode, [&](ag::Tape<Real>& t, ag::ValueId in) {
    return ag::bidrb(t, in, block, preact);
  });
}

template <typename Real>
void collect_parameters(ResidualModule<Real>& m, std::vector<Parameter<Real>*>& out) {
  if (m.preact_slope) out.push_back(&*m.preact_slope);
  for (auto& b : m.branches) {
    out.push_back(&b.conv.latent_weights);
    out.push_back(&b.rprelu.gamma);
    out.push_back(&b.rprelu.zeta);
    out.push_back(&b.rprelu.beta);
    out.push_back(&b.bn.scale);
    out.push_back(&b.bn.shift);
    out.push_back(&b.bn.running_mean);
    out.push_back(&b.bn.running_var);
  }
  if (m.fuse_bn) {
    out.push_back(&m.fuse_bn->scale);
    out.push_back(&m.fuse_bn->shift);
    out.push_back(&m.fuse_bn->running_mean);
    out.push_back(&m.fuse_bn->running_var);
  }
}

template <typename Real>
void collect_parameters(Block<Real>& b, std::vector<Parameter<Real>*>& out) {
  for (auto& m : b.modules) collect_parameters(m, out);
  if (b.residual.fp_weight) out.push_back(&*b.residual.fp_weight);
  if (b.residual.bin_conv) out.push_back(&b.residual.bin_conv->latent_weights);
}

template <typename Real>
void collect_binary_convs(Block<Real>& b, std::vector<BinaryConv2dParams<Real>*>& out) {
  for (auto& m : b.modules)
    for (auto& br : m.branches) out.push_back(&br.conv);
  if (b.residual.bin_conv) out.push_back(&*b.residual.bin_conv);
}

#define BIDRN_INSTANTIATE_LAYERS(R)                                              \
  template BasicTensor<R> Initializer::kaiming_uniform<R>(const Shape&,          \
                                                          std::size_t);          \
  template BasicTensor<R> Initializer::uniform<R>(const Shape&, float, float);   \
  template struct RPReLUParams<R>;                                               \
  template BasicTensor<R> rprelu_forward(const BasicTensor<R>&,                  \
                                         const RPReLUParams<R>&);                \
  template LcrLayer<R> make_lcr_layer(const std::string&, std::size_t,           \
                                      std::size_t, Initializer&);                \
  template ResidualModule<R> make_module(const std::string&, const ModuleSpec&,  \
                                         Preact, Initializer&);                  \
  template BlockResidual<R> make_block_residual(const std::string&,              \
                                                BlockResidualMode, const Shape&, \
                                                const Shape&, Initializer&);     \
  template ag::ValueId ag::preactivate(ag::Tape<R>&, ag::ValueId, Preact,        \
                                       Parameter<R>*);                           \
  template ag::ValueId ag::lcr_core(ag::Tape<R>&, ag::ValueId, LcrLayer<R>&);    \
  template ag::ValueId ag::module_core(ag::Tape<R>&, ag::ValueId,                \
                                      ResidualModule<R>&);                       \
  template ag::ValueId ag::module_forward(ag::Tape<R>&, ag::ValueId,             \
                                         ResidualModule<R>&, Preact);            \
  template ag::ValueId ag::block_residual(ag::Tape<R>&, ag::ValueId,             \
                                         BlockResidual<R>&);                     \
  template ag::ValueId ag::bidrb(ag::Tape<R>&, ag::ValueId, Block<R>&, Preact);  \
  template BasicTensor<R> lcr_forward(const BasicTensor<R>&, LcrLayer<R>&,       \
                                      Preact, ag::TapeOptions);                  \
  template BasicTensor<R> down_scale_residual_forward(                           \
      const BasicTensor<R>&, LcrLayer<R>&, ag::TapeOptions);                     \
  template BasicTensor<R> fusion_up_residual_forward(                            \
      const BasicTensor<R>&, LcrLayer<R>&, LcrLayer<R>&, BatchNormParams<R>&,    \
      ag::TapeOptions);                                                          \
  template BasicTensor<R> fusion_down_residual_forward(                          \
      const BasicTensor<R>&, LcrLayer<R>&, LcrLayer<R>&, BatchNormParams<R>&,    \
      ag::TapeOptions);                                                          \
  template BasicTensor<R> down_sample_residual_forward(                          \
      const BasicTensor<R>&, std::span<LcrLayer<R>>, BatchNormParams<R>&,        \
      ag::TapeOptions);                                                          \
  template BasicTensor<R> module_forward(const BasicTensor<R>&,                  \
                                         ResidualModule<R>&, Preact,             \
                                         ag::TapeOptions);                       \
  template BasicTensor<R> block_residual_forward(                                \
      const BasicTensor<R>&, BlockResidual<R>&, const Shape&, ag::TapeOptions);  \
  template BasicTensor<R> bidrb_forward(const BasicTensor<R>&, Block<R>&,        \
                                        Preact, ag::TapeOptions);                \
  template void collect_parameters(ResidualModule<R>&,                           \
                                   std::vector<Parameter<R>*>&);                 \
  template void collect_parameters(Block<R>&, std::vector<Parameter<R>*>&);      \
  template void collect_binary_convs(Block<R>&,                                  \
                                     std::vector<BinaryConv2dParams<R>*>&);

BIDRN_INSTANTIATE_LAYERS(float)
BIDRN_INSTANTIATE_LAYERS(double)

}  // namespace bidrn
