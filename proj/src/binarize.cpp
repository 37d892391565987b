#include "bidrn/binarize.hpp"

#include <atomic>
#include <bit>
#include <cmath>

#include "bidrn/errors.hpp"
#include "bidrn/ops.hpp"
#include "bidrn/parallel.hpp"

namespace bidrn {

namespace testing {
namespace {
std::atomic<bool> g_tail_fault{false};
}
void set_tail_mask_fault(bool enabled) { g_tail_fault.store(enabled); }
bool tail_mask_fault() { return g_tail_fault.load(std::memory_order_relaxed); }
}  // namespace testing

template <typename Real>
BasicTensor<Real> sign_forward(const BasicTensor<Real>& x) {
  return map(x, [](Real v) { return sign_value(v); });
}

template <typename Real>
BasicTensor<Real> ste_grad(const BasicTensor<Real>& x) {
  return map(x, [](Real v) { return ste_derivative(v); });
}

template <typename Real>
BasicTensor<Real> ste_surrogate_forward(const BasicTensor<Real>& x) {
  return map(x, [](Real v) { return ste_surrogate(v); });
}

template <typename Real>
std::vector<Real> compute_alpha(const BasicTensor<Real>& latent) {
  const Shape& s = latent.shape();
  const std::size_t fan_in = s.channels * s.height * s.width;
  std::vector<Real> alpha(s.batch);
  for (std::size_t oc = 0; oc < s.batch; ++oc) {
    double l1 = 0.0;
    for (std::size_t j = 0; j < fan_in; ++j) {
      l1 += std::abs(static_cast<double>(latent[oc * fan_in + j]));
    }
    alpha[oc] = static_cast<Real>(l1 / static_cast<double>(fan_in));
  }
  return alpha;
}

template <typename Real>
BinaryConv2dParams<Real>::BinaryConv2dParams(std::string name,
                                             BasicTensor<Real> weights,
                                             std::size_t stride_,
                                             std::size_t padding_)
    : latent_weights(std::move(name), std::move(weights)),
      stride(stride_),
      padding(padding_) {
  if (stride == 0) throw DimensionError("binary conv stride must be >= 1");
  const Shape& s = latent_weights.value.shape();
  if (s.height != s.width) {
    throw DimensionError("binary conv kernel must be square, got " + s.str());
  }
  alpha = compute_alpha(latent_weights.value);
}

template <typename Real>
void refresh_alpha(BinaryConv2dParams<Real>& p) {
  if (!p.finalized) p.alpha = compute_alpha(p.latent_weights.value);
}

template <typename Real>
void finalize(BinaryConv2dParams<Real>& p) {
  p.alpha = compute_alpha(p.latent_weights.value);
  p.finalized = true;
}

template <typename Real>
BasicTensor<Real> binarize_weights(BinaryConv2dParams<Real>& p) {
  refresh_alpha(p);
  const BasicTensor<Real>& w = p.latent_weights.value;
  const std::size_t fan_in = p.fan_in();
  BasicTensor<Real> out(w.shape());
  for (std::size_t oc = 0; oc < p.out_channels(); ++oc) {
    for (std::size_t j = 0; j < fan_in; ++j) {
      const std::size_t i = oc * fan_in + j;
      out[i] = p.alpha[oc] * sign_value(w[i]);
    }
  }
  return out;
}

std::size_t words_for(std::size_t valid_len) { return (valid_len + 63) / 64; }

PackedBits::PackedBits(std::size_t rows_, std::size_t valid_len_)
    : words(rows_ * words_for(valid_len_), 0),
      valid_len(valid_len_),
      rows(rows_),
      words_per_row(words_for(valid_len_)) {}

std::uint64_t PackedBits::tail_mask() const {
  const std::size_t rem = valid_len % 64;
  return rem == 0 ? ~std::uint64_t{0} : (std::uint64_t{1} << rem) - 1;
}

template <typename Real>
PackedBits pack_signs(std::span<const Real> values, std::size_t rows,
                      std::size_t valid_len) {
  if (valid_len == 0 || values.size() != rows * valid_len) {
    throw DimensionError("pack_signs: " + std::to_string(values.size()) +
                         " values cannot form " + std::to_string(rows) +
                         " rows of length " + std::to_string(valid_len));
  }
  PackedBits bits(rows, valid_len);
  for (std::size_t r = 0; r < rows; ++r) {
    auto dst = bits.row(r);
    const Real* src = values.data() + r * valid_len;
    for (std::size_t j = 0; j < valid_len; ++j) {
      if (src[j] >= Real(0)) dst[j / 64] |= std::uint64_t{1} << (j % 64);
    }
  }
  return bits;
}

template <typename Real>
std::vector<Real> unpack_signs(const PackedBits& bits) {
  std::vector<Real> out(bits.rows * bits.valid_len);
  for (std::size_t r = 0; r < bits.rows; ++r) {
    auto src = bits.row(r);
    for (std::size_t j = 0; j < bits.valid_len; ++j) {
      const bool one = (src[j / 64] >> (j % 64)) & 1u;
      out[r * bits.valid_len + j] = one ? Real(1) : Real(-1);
    }
  }
  return out;
}

std::int64_t xnor_popcount_dot(std::span<const std::uint64_t> a,
                               std::span<const std::uint64_t> w,
                               std::size_t valid_len) {
  const std::size_t nwords = words_for(valid_len);
  if (a.size() != nwords || w.size() != nwords) {
    throw DimensionError("xnor_popcount_dot: rows of " +
                         std::to_string(a.size()) + " and " +
                         std::to_string(w.size()) + " words for length " +
                         std::to_string(valid_len));
  }
  const std::size_t rem = valid_len % 64;
  std::uint64_t mask = rem == 0 ? ~std::uint64_t{0} : (std::uint64_t{1} << rem) - 1;
  if (testing::tail_mask_fault()) mask = ~std::uint64_t{0};
  std::int64_t agree = 0;
  for (std::size_t i = 0; i + 1 < nwords; ++i) {
    agree += std::popcount(~(a[i] ^ w[i]));
  }
  agree += std::popcount(~(a[nwords - 1] ^ w[nwords - 1]) & mask);
  return 2 * agree - static_cast<std::int64_t>(valid_len);
}

std::int64_t xnor_popcount_dot(const PackedBits& a, std::size_t a_row,
                               const PackedBits& w, std::size_t w_row) {
  if (a.valid_len != w.valid_len) {
    throw DimensionError("xnor_popcount_dot: valid lengths " +
                         std::to_string(a.valid_len) + " and " +
                         std::to_string(w.valid_len) + " differ");
  }
  if (a_row >= a.rows || w_row >= w.rows) {
    throw DimensionError("xnor_popcount_dot: row index out of range");
  }
  return xnor_popcount_dot(a.row(a_row), w.row(w_row), a.valid_len);
}

namespace {

template <typename Real>
void check_binary_operands(const Shape& in, const BinaryConv2dParams<Real>& p) {
  const Shape& ws = p.latent_weights.value.shape();
  if (ws.channels != in.channels) {
    throw DimensionError("binary convolution input " + in.str() +
                         " incompatible with weights " + ws.str());
  }
  if (p.alpha.size() != ws.batch) {
    throw DimensionError("alpha has " + std::to_string(p.alpha.size()) +
                         " entries for " + std::to_string(ws.batch) +
                         " output channels");
  }
}

}  // namespace

template <typename Real>
IntAccumulators binary_conv2d_accumulate(const BasicTensor<Real>& input,
                                         const BinaryConv2dParams<Real>& p) {
  const Shape& is = input.shape();
  check_binary_operands(is, p);
  const std::size_t k = p.kernel();
  const std::size_t cout = p.out_channels();
  const std::size_t oh = conv_out_extent(is.height, k, p.stride, p.padding);
  const std::size_t ow = conv_out_extent(is.width, k, p.stride, p.padding);
  const std::size_t len = p.fan_in();
  const long pad = static_cast<long>(p.padding);

  const PackedBits wbits =
      pack_signs<Real>(p.latent_weights.value.data(), cout, len);

  // One packed im2col row per output pixel; the reduction axis (ic, ky, kx)
  // follows the weight memory order.
  const std::size_t rows = is.batch * oh * ow;
  PackedBits abits(rows, len);
  parallel_for(rows, [&](std::size_t r) {
    const std::size_t n = r / (oh * ow);
    const std::size_t oy = (r / ow) % oh;
    const std::size_t ox = r % ow;
    auto dst = abits.row(r);
    std::size_t j = 0;
    for (std::size_t ic = 0; ic < is.channels; ++ic) {
      for (std::size_t ky = 0; ky < k; ++ky) {
        const long iy = static_cast<long>(oy * p.stride + ky) - pad;
        const bool row_in = iy >= 0 && iy < static_cast<long>(is.height);
        for (std::size_t kx = 0; kx < k; ++kx, ++j) {
          const long ix = static_cast<long>(ox * p.stride + kx) - pad;
          bool bit = true;  // padding reads as 0, and Sign(0) = +1
          if (row_in && ix >= 0 && ix < static_cast<long>(is.width)) {
            bit = input(n, ic, iy, ix) >= Real(0);
          }
          if (bit) dst[j / 64] |= std::uint64_t{1} << (j % 64);
        }
      }
    }
  }, 64);

  IntAccumulators acc{Shape{is.batch, cout, oh, ow},
                      std::vector<std::int32_t>(is.batch * cout * oh * ow)};
  parallel_for(rows, [&](std::size_t r) {
    const std::size_t n = r / (oh * ow);
    const std::size_t pix = r % (oh * ow);
    for (std::size_t oc = 0; oc < cout; ++oc) {
      acc.values[(n * cout + oc) * oh * ow + pix] = static_cast<std::int32_t>(
          xnor_popcount_dot(abits.row(r), wbits.row(oc), len));
    }
  }, 64);
  return acc;
}

template <typename Real>
BasicTensor<Real> scale_accumulators(const IntAccumulators& acc,
                                     std::span<const Real> alpha) {
  const Shape& s = acc.shape;
  if (alpha.size() != s.channels) {
    throw DimensionError("alpha length does not match accumulator channels");
  }
  BasicTensor<Real> out(s);
  for (std::size_t n = 0; n < s.batch; ++n)
    for (std::size_t c = 0; c < s.channels; ++c)
      for (std::size_t i = 0; i < s.plane(); ++i) {
        const std::size_t idx = (n * s.channels + c) * s.plane() + i;
        out[idx] = alpha[c] * static_cast<Real>(acc.values[idx]);
      }
  return out;
}

template <typename Real>
BasicTensor<Real> binary_conv2d(const BasicTensor<Real>& input,
                                const BinaryConv2dParams<Real>& p) {
  return scale_accumulators<Real>(binary_conv2d_accumulate(input, p), p.alpha);
}

template <typename Real>
IntAccumulators binary_deconv2d_accumulate(const BasicTensor<Real>& input,
                                           const BinaryConv2dParams<Real>& p,
                                           std::size_t out_stride) {
  const Shape& is = input.shape();
  check_binary_operands(is, p);
  const std::size_t k = p.kernel();
  const std::size_t cout = p.out_channels();
  const std::size_t oh = deconv_out_extent(is.height, k, out_stride, p.padding);
  const std::size_t ow = deconv_out_extent(is.width, k, out_stride, p.padding);
  const long pad = static_cast<long>(p.padding);
  const BasicTensor<Real>& w = p.latent_weights.value;

  IntAccumulators acc{Shape{is.batch, cout, oh, ow},
                      std::vector<std::int32_t>(is.batch * cout * oh * ow, 0)};
  parallel_for(is.batch * cout, [&](std::size_t job) {
    const std::size_t n = job / cout;
    const std::size_t oc = job % cout;
    std::int32_t* dst = acc.values.data() + (n * cout + oc) * oh * ow;
    for (std::size_t ic = 0; ic < is.channels; ++ic) {
      for (std::size_t iy = 0; iy < is.height; ++iy) {
        for (std::size_t ix = 0; ix < is.width; ++ix) {
          const int a = input(n, ic, iy, ix) >= Real(0) ? 1 : -1;
          for (std::size_t ky = 0; ky < k; ++ky) {
            const long y = static_cast<long>(iy * out_stride + ky) - pad;
            if (y < 0 || y >= static_cast<long>(oh)) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long x = static_cast<long>(ix * out_stride + kx) - pad;
              if (x < 0 || x >= static_cast<long>(ow)) continue;
              const int b = w(oc, ic, ky, kx) >= Real(0) ? 1 : -1;
              dst[y * ow + x] += a * b;
            }
          }
        }
      }
    }
  });
  return acc;
}

template <typename Real>
BasicTensor<Real> binary_deconv2d(const BasicTensor<Real>& input,
                                  const BinaryConv2dParams<Real>& p,
                                  std::size_t out_stride) {
  return scale_accumulators<Real>(
      binary_deconv2d_accumulate(input, p, out_stride), p.alpha);
}

#define BIDRN_INSTANTIATE_BINARIZE(R)                                           \
  template BasicTensor<R> sign_forward(const BasicTensor<R>&);                  \
  template BasicTensor<R> ste_grad(const BasicTensor<R>&);                      \
  template BasicTensor<R> ste_surrogate_forward(const BasicTensor<R>&);         \
  template std::vector<R> compute_alpha(const BasicTensor<R>&);                 \
  template struct BinaryConv2dParams<R>;                                        \
  template void refresh_alpha(BinaryConv2dParams<R>&);                          \
  template void finalize(BinaryConv2dParams<R>&);                               \
  template BasicTensor<R> binarize_weights(BinaryConv2dParams<R>&);             \
  template PackedBits pack_signs(std::span<const R>, std::size_t, std::size_t); \
  template std::vector<R> unpack_signs(const PackedBits&);                      \
  template IntAccumulators binary_conv2d_accumulate(                            \
      const BasicTensor<R>&, const BinaryConv2dParams<R>&);                     \
  template BasicTensor<R> binary_conv2d(const BasicTensor<R>&,                  \
                                        const BinaryConv2dParams<R>&);          \
  template IntAccumulators binary_deconv2d_accumulate(                          \
      const BasicTensor<R>&, const BinaryConv2dParams<R>&, std::size_t);        \
  template BasicTensor<R> binary_deconv2d(                                      \
      const BasicTensor<R>&, const BinaryConv2dParams<R>&, std::size_t);        \
  template BasicTensor<R> scale_accumulators(const IntAccumulators&,            \
                                             std::span<const R>);

BIDRN_INSTANTIATE_BINARIZE(float)
BIDRN_INSTANTIATE_BINARIZE(double)

}  // namespace bidrn
