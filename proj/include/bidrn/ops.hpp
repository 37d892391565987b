#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "bidrn/tensor.hpp"

// Full-precision reference operators. Every binarized kernel and every
// backward rule in the library is checked against these. Reductions
// accumulate in double regardless of the storage type.
namespace bidrn {

std::size_t conv_out_extent(std::size_t in, std::size_t kernel,
                            std::size_t stride, std::size_t padding);
std::size_t deconv_out_extent(std::size_t in, std::size_t kernel,
                              std::size_t stride, std::size_t padding);

// Cross-correlation, no bias. weights: C_out x C_in x K x K.
template <typename Real>
BasicTensor<Real> conv2d_reference(const BasicTensor<Real>& input,
                                   const BasicTensor<Real>& weights,
                                   std::size_t stride, std::size_t padding);

template <typename Real>
BasicTensor<Real> conv2d_backward_input(const BasicTensor<Real>& grad_out,
                                        const BasicTensor<Real>& weights,
                                        const Shape& input_shape,
                                        std::size_t stride,
                                        std::size_t padding);

template <typename Real>
BasicTensor<Real> conv2d_backward_weights(const BasicTensor<Real>& grad_out,
                                          const BasicTensor<Real>& input,
                                          const Shape& weight_shape,
                                          std::size_t stride,
                                          std::size_t padding);

// Transposed convolution. weights: C_out x C_in x K x K, where C_in is the
// channel count of `input`; output extent (H-1)*stride - 2*padding + K.
template <typename Real>
BasicTensor<Real> conv_transpose2d_reference(const BasicTensor<Real>& input,
                                             const BasicTensor<Real>& weights,
                                             std::size_t stride,
                                             std::size_t padding);

template <typename Real>
BasicTensor<Real> conv_transpose2d_backward_input(
    const BasicTensor<Real>& grad_out, const BasicTensor<Real>& weights,
    const Shape& input_shape, std::size_t stride, std::size_t padding);

template <typename Real>
BasicTensor<Real> conv_transpose2d_backward_weights(
    const BasicTensor<Real>& grad_out, const BasicTensor<Real>& input,
    const Shape& weight_shape, std::size_t stride, std::size_t padding);

template <typename Real>
BasicTensor<Real> pad2d(const BasicTensor<Real>& x, std::size_t padding,
                        Real value);
// Inverse of pad2d: drops a `padding`-wide border.
template <typename Real>
BasicTensor<Real> crop2d(const BasicTensor<Real>& x, std::size_t padding);

template <typename Real>
BasicTensor<Real> avg_pool2d(const BasicTensor<Real>& input, std::size_t window,
                             std::size_t stride);
template <typename Real>
BasicTensor<Real> avg_pool2d_backward(const BasicTensor<Real>& grad_out,
                                      const Shape& input_shape,
                                      std::size_t window, std::size_t stride);

// Mean over H x W; output N x C x 1 x 1.
template <typename Real>
BasicTensor<Real> global_avg_pool(const BasicTensor<Real>& input);

template <typename Real>
BasicTensor<Real> concat_channels(const BasicTensor<Real>& a,
                                  const BasicTensor<Real>& b);
template <typename Real>
std::pair<BasicTensor<Real>, BasicTensor<Real>> split_channels(
    const BasicTensor<Real>& x, std::size_t first);
template <typename Real>
BasicTensor<Real> slice_channels(const BasicTensor<Real>& x, std::size_t begin,
                                 std::size_t count);

template <typename Real>
BasicTensor<Real> add(const BasicTensor<Real>& a, const BasicTensor<Real>& b);
template <typename Real>
BasicTensor<Real> scale(const BasicTensor<Real>& a, Real factor);

template <typename Real>
struct BatchNormParams {
  Parameter<Real> scale;
  Parameter<Real> shift;
  Parameter<Real> running_mean;
  Parameter<Real> running_var;
  Real epsilon = Real(1e-5);
  Real momentum = Real(0.1);

  BatchNormParams() = default;
  BatchNormParams(const std::string& prefix, std::size_t channels);
  std::size_t channels() const { return scale.value.shape().channels; }
};

// Saved per-channel statistics for the backward pass.
struct BatchNormCache {
  std::vector<double> mean;
  std::vector<double> inv_std;
  bool training = false;
};

// training: normalize with batch statistics (biased variance) and update the
// running statistics (unbiased variance) by momentum. Otherwise use running
// statistics. `cache` receives what the backward pass needs.
template <typename Real>
BasicTensor<Real> batch_norm_forward(const BasicTensor<Real>& x,
                                     BatchNormParams<Real>& p, bool training,
                                     BatchNormCache* cache = nullptr);

template <typename Real>
BasicTensor<Real> hardtanh_forward(const BasicTensor<Real>& x);
template <typename Real>
BasicTensor<Real> relu_forward(const BasicTensor<Real>& x);
// slope: 1 x C x 1 x 1, one negative-side slope per channel.
template <typename Real>
BasicTensor<Real> prelu_forward(const BasicTensor<Real>& x,
                                const BasicTensor<Real>& slope);

// Mean absolute difference over all elements.
template <typename Real>
Real l1_loss(const BasicTensor<Real>& pred, const BasicTensor<Real>& target);

// Elementwise helpers for ops without a dedicated name.
template <typename Real, typename Fn>
BasicTensor<Real> map(const BasicTensor<Real>& x, Fn&& fn) {
  BasicTensor<Real> out(x.shape());
  auto src = x.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = fn(src[i]);
  return out;
}

void require_same_shape(const Shape& a, const Shape& b, const char* what);

}  // namespace bidrn
