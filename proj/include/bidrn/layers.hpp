#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bidrn/autograd.hpp"
#include "bidrn/binarize.hpp"
#include "bidrn/config.hpp"
#include "bidrn/ops.hpp"

namespace bidrn {

// Deterministic parameter initializer. Samples are drawn in single precision
// and widened, so float and double builds from one seed hold equal values.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  // Uniform in +-sqrt(6 / fan_in).
  template <typename Real>
  BasicTensor<Real> kaiming_uniform(const Shape& shape, std::size_t fan_in);
  template <typename Real>
  BasicTensor<Real> uniform(const Shape& shape, float lo, float hi);

  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

template <typename Real>
struct RPReLUParams {
  Parameter<Real> gamma;  // threshold shift, init 0
  Parameter<Real> zeta;   // output shift, init 0
  Parameter<Real> beta;   // negative-side slope, init 0.25

  RPReLUParams() = default;
  RPReLUParams(const std::string& prefix, std::size_t channels);
  std::size_t channels() const { return gamma.value.size(); }
};

template <typename Real>
BasicTensor<Real> rprelu_forward(const BasicTensor<Real>& o,
                                 const RPReLUParams<Real>& p);

// One binarized convolution wrapped in a local full-precision shortcut:
// BatchNorm(RPReLU(BinConv(a_f)) + shortcut(a_f)), where the shortcut is the
// identity for stride 1 and 2x2 average pooling for stride 2.
template <typename Real>
struct LcrLayer {
  BinaryConv2dParams<Real> conv;
  RPReLUParams<Real> rprelu;
  BatchNormParams<Real> bn;

  std::size_t channels() const { return conv.out_channels(); }
  std::size_t stride() const { return conv.stride; }
};

// 3x3, padding 1, channels -> channels.
template <typename Real>
LcrLayer<Real> make_lcr_layer(const std::string& prefix, std::size_t channels,
                              std::size_t stride, Initializer& init);

template <typename Real>
struct ResidualModule {
  ModuleSpec spec;
  std::optional<Parameter<Real>> preact_slope;  // Prelu pre-activation only
  std::vector<LcrLayer<Real>> branches;
  std::optional<BatchNormParams<Real>> fuse_bn;  // Fusion/DownSample modules
};

template <typename Real>
ResidualModule<Real> make_module(const std::string& prefix, const ModuleSpec& spec,
                                 Preact preact, Initializer& init);

// Block-level shortcut: avg-pool to the target extent, then a 1x1 convolution
// to the target channels (full precision or binarized).
template <typename Real>
struct BlockResidual {
  BlockResidualMode mode = BlockResidualMode::None;
  std::size_t pool = 1;
  std::optional<Parameter<Real>> fp_weight;
  std::optional<BinaryConv2dParams<Real>> bin_conv;
};

template <typename Real>
BlockResidual<Real> make_block_residual(const std::string& prefix,
                                        BlockResidualMode mode, const Shape& in,
                                        const Shape& target, Initializer& init);

template <typename Real>
struct Block {
  std::vector<ResidualModule<Real>> modules;
  BlockResidual<Real> residual;
};

// Tape-level forwards. `x` is the module/block input before pre-activation.
namespace ag {

template <typename Real>
ValueId preactivate(Tape<Real>& t, ValueId x, Preact preact,
                    Parameter<Real>* slope);
// Runs one LCR layer on an already pre-activated tensor.
template <typename Real>
ValueId lcr_core(Tape<Real>& t, ValueId a_f, LcrLayer<Real>& layer);
// Runs a module on an already pre-activated tensor; one shared a_f feeds
// every branch.
template <typename Real>
ValueId module_core(Tape<Real>& t, ValueId a_f, ResidualModule<Real>& m);
template <typename Real>
ValueId module_forward(Tape<Real>& t, ValueId x, ResidualModule<Real>& m,
                       Preact preact);
template <typename Real>
ValueId block_residual(Tape<Real>& t, ValueId x, BlockResidual<Real>& br);
// main(x) + BR(a_f), with a_f the first module's pre-activation.
template <typename Real>
ValueId bidrb(Tape<Real>& t, ValueId x, Block<Real>& block, Preact preact);

}  // namespace ag

// Tensor-level forwards (no gradient recording). `mode` selects BatchNorm
// statistics and the Sign realization.
template <typename Real>
BasicTensor<Real> lcr_forward(const BasicTensor<Real>& x, LcrLayer<Real>& layer,
                              Preact preact = Preact::Hardtanh,
                              ag::TapeOptions mode = {false});
template <typename Real>
BasicTensor<Real> down_scale_residual_forward(const BasicTensor<Real>& x,
                                              LcrLayer<Real>& layer,
                                              ag::TapeOptions mode = {false});
template <typename Real>
BasicTensor<Real> fusion_up_residual_forward(const BasicTensor<Real>& x,
                                             LcrLayer<Real>& a, LcrLayer<Real>& b,
                                             BatchNormParams<Real>& fuse_bn,
                                             ag::TapeOptions mode = {false});
template <typename Real>
BasicTensor<Real> fusion_down_residual_forward(const BasicTensor<Real>& x,
                                               LcrLayer<Real>& a,
                                               LcrLayer<Real>& b,
                                               BatchNormParams<Real>& fuse_bn,
                                               ag::TapeOptions mode = {false});
// k parallel stride-2 branches concatenated: C -> kC, H/2 x W/2.
template <typename Real>
BasicTensor<Real> down_sample_residual_forward(const BasicTensor<Real>& x,
                                               std::span<LcrLayer<Real>> branches,
                                               BatchNormParams<Real>& fuse_bn,
                                               ag::TapeOptions mode = {false});
template <typename Real>
BasicTensor<Real> module_forward(const BasicTensor<Real>& x, ResidualModule<Real>& m,
                                 Preact preact = Preact::Hardtanh,
                                 ag::TapeOptions mode = {false});
// Throws DimensionError if the residual cannot produce `target_shape`.
template <typename Real>
BasicTensor<Real> block_residual_forward(const BasicTensor<Real>& x,
                                         BlockResidual<Real>& br,
                                         const Shape& target_shape,
                                         ag::TapeOptions mode = {false});
template <typename Real>
BasicTensor<Real> bidrb_forward(const BasicTensor<Real>& x, Block<Real>& block,
                                Preact preact = Preact::Hardtanh,
                                ag::TapeOptions mode = {false});

// Every parameter a module owns, in construction order.
template <typename Real>
void collect_parameters(ResidualModule<Real>& m, std::vector<Parameter<Real>*>& out);
template <typename Real>
void collect_parameters(Block<Real>& b, std::vector<Parameter<Real>*>& out);
template <typename Real>
void collect_binary_convs(Block<Real>& b, std::vector<BinaryConv2dParams<Real>*>& out);

}  // namespace bidrn
