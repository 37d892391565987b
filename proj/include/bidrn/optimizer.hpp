#pragma once

#include <span>
#include <vector>

#include "bidrn/binarize.hpp"
#include "bidrn/tensor.hpp"

namespace bidrn {

template <typename Real>
struct OptimizerState {
  std::vector<BasicTensor<Real>> m;  // first moments, one per parameter
  std::vector<BasicTensor<Real>> v;  // second moments
  std::size_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam on every trainable parameter, reading Parameter::grad.
// Moments are created on the first call; later calls must pass the same
// parameter list. Alpha of each conv in `refresh` is recomputed afterwards.
template <typename Real>
void adam_step(std::span<Parameter<Real>* const> params, OptimizerState<Real>& state,
               std::span<BinaryConv2dParams<Real>* const> refresh = {});

}  // namespace bidrn
