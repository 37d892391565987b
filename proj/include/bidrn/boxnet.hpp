#pragma once

#include <cstdint>
#include <vector>

#include "bidrn/autograd.hpp"
#include "bidrn/binarize.hpp"
#include "bidrn/tensor.hpp"

namespace bidrn {

// values: batch x (joints * depth) x H x W; joint j owns channels
// [j * depth, (j + 1) * depth).
template <typename Real>
struct BasicHeatmap {
  std::size_t joints = 1;
  std::size_t depth = 1;
  BasicTensor<Real> values;

  std::size_t height() const { return values.shape().height; }
  std::size_t width() const { return values.shape().width; }
};
using Heatmap = BasicHeatmap<float>;

// A conv or deconv whose mode can be flipped without touching its shape.
// Full-precision mode uses the latent weights directly.
template <typename Real>
struct SwitchableConv {
  BinaryConv2dParams<Real> conv;
  bool binarized = true;
};

struct BoxNetConfig {
  std::size_t in_channels = 8;
  std::size_t joints = 4;
  std::size_t depth = 1;
  std::size_t deconv_layers = 2;  // each doubles H and W
  std::size_t deconv_channels = 8;
  std::size_t hidden = 16;         // width of the binarized linears
  std::size_t binary_linears = 1;
  std::size_t boxes = 3;           // face, left hand, right hand
  // Conv and deconv layers binarized; linears are fixed by the head layout.
  bool binarized = true;
  std::uint64_t seed = 0;
};

template <typename Real>
struct BoxNetParams {
  BoxNetConfig config;
  SwitchableConv<Real> heatmap_conv;          // 3x3, C -> J*D
  std::vector<SwitchableConv<Real>> deconvs;  // K4 s2 p1
  SwitchableConv<Real> box_conv;              // 3x3 -> one map per box
  std::vector<BinaryConv2dParams<Real>> binary_linears;
  Parameter<Real> final_linear;               // full precision, -> 2 * boxes

  std::vector<Parameter<Real>*> parameters();
  // Structural count of full-precision linear layers.
  std::size_t full_precision_linears() const;
};

template <typename Real>
BoxNetParams<Real> make_boxnet(const BoxNetConfig& cfg);

// Box centers (x, y) and sizes (w, h): batch x boxes x 2 x 1 each.
template <typename Real>
struct BoxPrediction {
  BasicTensor<Real> center;
  BasicTensor<Real> size;
};

// Softmax over each joint's D*H*W cells.
template <typename Real>
BasicHeatmap<Real> normalize(const BasicHeatmap<Real>& h);

// Expected (x, y, z) under each joint's softmax: batch x joints x 3 x 1.
template <typename Real>
BasicTensor<Real> soft_argmax(const BasicHeatmap<Real>& h);

template <typename Real>
BasicHeatmap<Real> predict_heatmaps(const BasicTensor<Real>& feature,
                                    BoxNetParams<Real>& p,
                                    ag::TapeOptions mode = {false});

template <typename Real>
BoxPrediction<Real> box_head_forward(const BasicTensor<Real>& feature,
                                     BoxNetParams<Real>& p,
                                     ag::TapeOptions mode = {false});

// Mean L1 over every center and size component.
template <typename Real>
Real box_loss(const BoxPrediction<Real>& pred, const BoxPrediction<Real>& target);

namespace ag {

template <typename Real>
ValueId soft_argmax(Tape<Real>& t, ValueId heatmap, std::size_t joints,
                    std::size_t depth);

struct BoxHeadIds {
  ValueId heatmap;
  ValueId center;  // batch x boxes x 2 x 1
  ValueId size;    // batch x boxes x 2 x 1
};

template <typename Real>
BoxHeadIds box_head(Tape<Real>& t, ValueId feature, BoxNetParams<Real>& p);

template <typename Real>
ValueId box_loss(Tape<Real>& t, const BoxHeadIds& pred,
                 const BoxPrediction<Real>& target);

}  // namespace ag

}  // namespace bidrn
