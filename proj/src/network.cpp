#include "bidrn/network.hpp"

#include "bidrn/errors.hpp"

namespace bidrn {

template <typename Real>
std::vector<Parameter<Real>*> Network<Real>::parameters() {
  std::vector<Parameter<Real>*> out;
  if (stem_weight) out.push_back(&*stem_weight);
  if (stem_bn) {
    out.push_back(&stem_bn->scale);
    out.push_back(&stem_bn->shift);
    out.push_back(&stem_bn->running_mean);
    out.push_back(&stem_bn->running_var);
  }
  for (auto& b : blocks) collect_parameters(b, out);
  out.push_back(&head_weight);
  return out;
}

template <typename Real>
std::vector<BinaryConv2dParams<Real>*> Network<Real>::binary_convs() {
  std::vector<BinaryConv2dParams<Real>*> out;
  for (auto& b : blocks) collect_binary_convs(b, out);
  return out;
}

template <typename Real>
void Network<Real>::refresh_alpha() {
  for (auto* p : binary_convs()) bidrn::refresh_alpha(*p);
}

template <typename Real>
Shape Network<Real>::feature_shape(std::size_t batch) const {
  Shape s = trace.block_out.empty() ? trace.stem_out : trace.block_out.back();
  s.batch = batch;
  return s;
}

template <typename Real>
Network<Real> build_network(const NetworkConfig& cfg) {
  Network<Real> net;
  net.config = cfg;
  net.trace = validate(cfg, 1);
  Initializer init(cfg.seed);
  const std::size_t in_c = cfg.input_shape.channels;
  if (cfg.stem.out_channels > 0) {
    const Shape ws{cfg.stem.out_channels, in_c, 3, 3};
    net.stem_weight.emplace("stem.weight", init.kaiming_uniform<Real>(ws, in_c * 9));
    net.stem_bn.emplace("stem.bn", cfg.stem.out_channels);
  }
  for (std::size_t i = 0; i < cfg.blocks.size(); ++i) {
    const BlockSpec& bs = cfg.blocks[i];
    const std::string prefix = "block" + std::to_string(i);
    Block<Real> block;
    for (std::size_t j = 0; j < bs.modules.size(); ++j) {
      block.modules.push_back(make_module<Real>(
          prefix + ".module" + std::to_string(j), bs.modules[j], cfg.preact, init));
    }
    block.residual = make_block_residual<Real>(prefix, bs.block_residual.mode,
                                               net.trace.block_in[i],
                                               net.trace.block_out[i], init);
    net.blocks.push_back(std::move(block));
  }
  const std::size_t feat_c = net.feature_shape(1).channels;
  net.head_weight = Parameter<Real>(
      "head.weight",
      init.kaiming_uniform<Real>(Shape{cfg.head_out, feat_c, 1, 1}, feat_c));
  return net;
}

namespace ag {

template <typename Real>
ValueId network_features(Tape<Real>& t, ValueId x, Network<Real>& net) {
  const Shape& s = t.value(x).shape();
  const Shape& want = net.config.input_shape;
  if (s.channels != want.channels || s.height != want.height || s.width != want.width) {
    throw DimensionError("network expects input " + want.str() + " (any batch), got " +
                         s.str());
  }
  ValueId h = x;
  if (net.stem_weight) {
    h = conv2d(t, h, *net.stem_weight, net.config.stem.stride, 1);
    h = batch_norm(t, h, *net.stem_bn);
  }
  for (auto& b : net.blocks) h = bidrb(t, h, b, net.config.preact);
  return h;
}

template <typename Real>
ValueId network_forward(Tape<Real>& t, ValueId x, Network<Real>& net) {
  const ValueId f = global_avg_pool(t, network_features(t, x, net));
  return conv2d(t, f, net.head_weight, 1, 0);
}

}  // namespace ag

template <typename Real>
BasicTensor<Real> bidrn_forward(const BasicTensor<Real>& x, Network<Real>& net,
                                ag::TapeOptions mode) {
  mode.record = false;
  ag::Tape<Real> t(mode);
  return t.value(ag::network_forward(t, t.input(x), net));
}

#define BIDRN_INSTANTIATE_NETWORK(R)                                              \
  template struct Network<R>;                                                     \
  template Network<R> build_network<R>(const NetworkConfig&);                     \
  template ag::ValueId ag::network_features(ag::Tape<R>&, ag::ValueId,            \
                                            Network<R>&);                         \
  template ag::ValueId ag::network_forward(ag::Tape<R>&, ag::ValueId, Network<R>&); \
  template BasicTensor<R> bidrn_forward(const BasicTensor<R>&, Network<R>&,       \
                                        ag::TapeOptions);

BIDRN_INSTANTIATE_NETWORK(float)
BIDRN_INSTANTIATE_NETWORK(double)

}  // namespace bidrn
