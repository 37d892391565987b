#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bidrn/tensor.hpp"

namespace bidrn {

// Sign with zero mapped to +1.
template <typename Real>
constexpr Real sign_value(Real x) {
  return x >= Real(0) ? Real(1) : Real(-1);
}

// Piecewise quadratic stand-in for Sign used during backpropagation:
// +1 for x >= 1, -x^2 + 2x on [0, 1), x^2 + 2x on [-1, 0), -1 below -1.
template <typename Real>
constexpr Real ste_surrogate(Real x) {
  if (x >= Real(1)) return Real(1);
  if (x >= Real(0)) return -x * x + Real(2) * x;
  if (x >= Real(-1)) return x * x + Real(2) * x;
  return Real(-1);
}

// Derivative of ste_surrogate: 2 - 2x on [0, 1), 2 + 2x on [-1, 0), else 0.
template <typename Real>
constexpr Real ste_derivative(Real x) {
  if (x >= Real(1) || x < Real(-1)) return Real(0);
  if (x >= Real(0)) return Real(2) - Real(2) * x;
  return Real(2) + Real(2) * x;
}

template <typename Real>
BasicTensor<Real> sign_forward(const BasicTensor<Real>& x);
template <typename Real>
BasicTensor<Real> ste_grad(const BasicTensor<Real>& x);
template <typename Real>
BasicTensor<Real> ste_surrogate_forward(const BasicTensor<Real>& x);

// Latent full-precision weights (C_out x C_in x K x K) with one scale per
// output channel: alpha[i] = ||w_i||_1 / (C_in * K * K).
template <typename Real>
struct BinaryConv2dParams {
  Parameter<Real> latent_weights;
  std::vector<Real> alpha;
  std::size_t stride = 1;
  std::size_t padding = 0;
  // Set by finalize(): alpha is no longer recomputed from the latent weights.
  bool finalized = false;

  BinaryConv2dParams() = default;
  BinaryConv2dParams(std::string name, BasicTensor<Real> weights,
                     std::size_t stride_, std::size_t padding_);

  std::size_t out_channels() const { return latent_weights.value.shape().batch; }
  std::size_t in_channels() const { return latent_weights.value.shape().channels; }
  std::size_t kernel() const { return latent_weights.value.shape().height; }
  std::size_t fan_in() const { return in_channels() * kernel() * kernel(); }
};

template <typename Real>
std::vector<Real> compute_alpha(const BasicTensor<Real>& latent);

// Recomputes alpha from the latent weights unless finalized.
template <typename Real>
void refresh_alpha(BinaryConv2dParams<Real>& p);

// Freezes alpha at its current latent-weight value for inference.
template <typename Real>
void finalize(BinaryConv2dParams<Real>& p);

// alpha_i * Sign(w_i) per output channel. Refreshes p.alpha first.
template <typename Real>
BasicTensor<Real> binarize_weights(BinaryConv2dParams<Real>& p);

// Sign tensor bit-packed along rows: bit 1 encodes +1, bit 0 encodes -1,
// little-endian within each 64-bit word. Bits past valid_len are zero.
struct PackedBits {
  std::vector<std::uint64_t> words;
  std::size_t valid_len = 0;
  std::size_t rows = 0;
  std::size_t words_per_row = 0;

  PackedBits() = default;
  PackedBits(std::size_t rows_, std::size_t valid_len_);

  std::span<std::uint64_t> row(std::size_t r) {
    return std::span(words).subspan(r * words_per_row, words_per_row);
  }
  std::span<const std::uint64_t> row(std::size_t r) const {
    return std::span(words).subspan(r * words_per_row, words_per_row);
  }
  std::size_t bytes() const { return words.size() * sizeof(std::uint64_t); }
  // Mask of meaningful bits in the final word of a row.
  std::uint64_t tail_mask() const;
};

std::size_t words_for(std::size_t valid_len);

// Packs `rows` rows of `valid_len` values each; the sign of every value is
// taken first, so inputs may be raw reals or exact +-1.
template <typename Real>
PackedBits pack_signs(std::span<const Real> values, std::size_t rows,
                      std::size_t valid_len);

template <typename Real>
std::vector<Real> unpack_signs(const PackedBits& bits);

// +-1 dot product of two packed rows: 2 * popcount(XNOR & mask) - valid_len.
std::int64_t xnor_popcount_dot(std::span<const std::uint64_t> a,
                               std::span<const std::uint64_t> w,
                               std::size_t valid_len);
std::int64_t xnor_popcount_dot(const PackedBits& a, std::size_t a_row,
                               const PackedBits& w, std::size_t w_row);

// Pre-scale integer result of a binarized convolution.
struct IntAccumulators {
  Shape shape;
  std::vector<std::int32_t> values;
};

// Integer +-1 convolution of Sign(input) with Sign(weights) through packed
// im2col rows. Zero padding cells count as Sign(0) = +1.
template <typename Real>
IntAccumulators binary_conv2d_accumulate(const BasicTensor<Real>& input,
                                         const BinaryConv2dParams<Real>& p);

// alpha[oc] * binary_conv2d_accumulate. Uses p.alpha as stored.
template <typename Real>
BasicTensor<Real> binary_conv2d(const BasicTensor<Real>& input,
                                const BinaryConv2dParams<Real>& p);

// Transposed convolution of Sign(input) with alpha * Sign(weights), evaluated
// in the unpacked integer domain. p.padding crops the output.
template <typename Real>
IntAccumulators binary_deconv2d_accumulate(const BasicTensor<Real>& input,
                                           const BinaryConv2dParams<Real>& p,
                                           std::size_t out_stride);
template <typename Real>
BasicTensor<Real> binary_deconv2d(const BasicTensor<Real>& input,
                                  const BinaryConv2dParams<Real>& p,
                                  std::size_t out_stride);

template <typename Real>
BasicTensor<Real> scale_accumulators(const IntAccumulators& acc,
                                     std::span<const Real> alpha);

namespace testing {
// Fault injection for verification drills: when enabled, xnor_popcount_dot
// stops masking the tail word and overcounts padding bits.
void set_tail_mask_fault(bool enabled);
bool tail_mask_fault();
}  // namespace testing

}  // namespace bidrn
