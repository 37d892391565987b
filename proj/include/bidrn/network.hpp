#pragma once

#include <optional>
#include <vector>

#include "bidrn/autograd.hpp"
#include "bidrn/config.hpp"
#include "bidrn/layers.hpp"

namespace bidrn {

template <typename Real>
struct Network {
  NetworkConfig config;
  ShapeTrace trace;  // batch 1
  std::optional<Parameter<Real>> stem_weight;
  std::optional<BatchNormParams<Real>> stem_bn;
  std::vector<Block<Real>> blocks;
  Parameter<Real> head_weight;  // head_out x C x 1 x 1, full precision

  std::vector<Parameter<Real>*> parameters();
  std::vector<BinaryConv2dParams<Real>*> binary_convs();
  void refresh_alpha();
  Shape feature_shape(std::size_t batch) const;
};

// Throws ConfigError (naming the block) if the shapes do not chain.
template <typename Real>
Network<Real> build_network(const NetworkConfig& cfg);

namespace ag {
// Stem and blocks, without the head.
template <typename Real>
ValueId network_features(Tape<Real>& t, ValueId x, Network<Real>& net);
// Features, global average pool, linear: N x head_out x 1 x 1.
template <typename Real>
ValueId network_forward(Tape<Real>& t, ValueId x, Network<Real>& net);
}  // namespace ag

template <typename Real>
BasicTensor<Real> bidrn_forward(const BasicTensor<Real>& x, Network<Real>& net,
                                ag::TapeOptions mode = {false});

}  // namespace bidrn
