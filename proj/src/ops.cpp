#include "bidrn/ops.hpp"

#include <algorithm>
#include <cmath>

#include "bidrn/errors.hpp"
#include "bidrn/parallel.hpp"

namespace bidrn {

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) {
    throw DimensionError(std::string(what) + ": shape " + a.str() +
                         " does not match " + b.str());
  }
}

std::size_t conv_out_extent(std::size_t in, std::size_t kernel,
                            std::size_t stride, std::size_t padding) {
  if (stride == 0) throw DimensionError("stride must be >= 1");
  if (kernel == 0) throw DimensionError("kernel must be >= 1");
  if (in + 2 * padding < kernel) {
    throw DimensionError("kernel " + std::to_string(kernel) +
                         " larger than padded extent " +
                         std::to_string(in + 2 * padding));
  }
  return (in + 2 * padding - kernel) / stride + 1;
}

std::size_t deconv_out_extent(std::size_t in, std::size_t kernel,
                              std::size_t stride, std::size_t padding) {
  if (stride == 0) throw DimensionError("stride must be >= 1");
  const std::size_t full = (in - 1) * stride + kernel;
  if (full <= 2 * padding) {
    throw DimensionError("transposed convolution padding " +
                         std::to_string(padding) + " consumes the output");
  }
  return full - 2 * padding;
}

namespace {

void check_conv_operands(const Shape& in, const Shape& w) {
  if (w.channels != in.channels || w.height != w.width) {
    throw DimensionError("convolution input " + in.str() +
                         " incompatible with weights " + w.str());
  }
}

}  // namespace

template <typename Real>
BasicTensor<Real> conv2d_reference(const BasicTensor<Real>& input,
                                   const BasicTensor<Real>& weights,
                                   std::size_t stride, std::size_t padding) {
  const Shape& is = input.shape();
  const Shape& ws = weights.shape();
  check_conv_operands(is, ws);
  const std::size_t k = ws.height;
  const std::size_t oh = conv_out_extent(is.height, k, stride, padding);
  const std::size_t ow = conv_out_extent(is.width, k, stride, padding);
  BasicTensor<Real> out(Shape{is.batch, ws.batch, oh, ow});
  const long pad = static_cast<long>(padding);

  parallel_for(is.batch * ws.batch, [&](std::size_t job) {
    const std::size_t n = job / ws.batch;
    const std::size_t oc = job % ws.batch;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (std::size_t ic = 0; ic < is.channels; ++ic) {
          for (std::size_t ky = 0; ky < k; ++ky) {
            const long iy = static_cast<long>(oy * stride + ky) - pad;
            if (iy < 0 || iy >= static_cast<long>(is.height)) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long ix = static_cast<long>(ox * stride + kx) - pad;
              if (ix < 0 || ix >= static_cast<long>(is.width)) continue;
              acc += static_cast<double>(input(n, ic, iy, ix)) *
                     static_cast<double>(weights(oc, ic, ky, kx));
            }
          }
        }
        out(n, oc, oy, ox) = static_cast<Real>(acc);
      }
    }
  }, 4);
  return out;
}

template <typename Real>
BasicTensor<Real> conv2d_backward_input(const BasicTensor<Real>& grad_out,
                                        const BasicTensor<Real>& weights,
                                        const Shape& input_shape,
                                        std::size_t stride,
                                        std::size_t padding) {
  const Shape& ws = weights.shape();
  const Shape& gs = grad_out.shape();
  const std::size_t k = ws.height;
  const long pad = static_cast<long>(padding);
  std::vector<double> acc(input_shape.numel(), 0.0);
  auto at = [&](std::size_t n, std::size_t c, long y, long x) -> double& {
    return acc[((n * input_shape.channels + c) * input_shape.height + y) *
                   input_shape.width + x];
  };
  for (std::size_t n = 0; n < gs.batch; ++n) {
    for (std::size_t oc = 0; oc < gs.channels; ++oc) {
      for (std::size_t oy = 0; oy < gs.height; ++oy) {
        for (std::size_t ox = 0; ox < gs.width; ++ox) {
          const double g = grad_out(n, oc, oy, ox);
          if (g == 0.0) continue;
          for (std::size_t ic = 0; ic < ws.channels; ++ic) {
            for (std::size_t ky = 0; ky < k; ++ky) {
              const long iy = static_cast<long>(oy * stride + ky) - pad;
              if (iy < 0 || iy >= static_cast<long>(input_shape.height)) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long ix = static_cast<long>(ox * stride + kx) - pad;
                if (ix < 0 || ix >= static_cast<long>(input_shape.width)) continue;
                at(n, ic, iy, ix) += g * weights(oc, ic, ky, kx);
              }
            }
          }
        }
      }
    }
  }
  return BasicTensor<Real>(input_shape, std::vector<Real>(acc.begin(), acc.end()));
}

template <typename Real>
BasicTensor<Real> conv2d_backward_weights(const BasicTensor<Real>& grad_out,
                                          const BasicTensor<Real>& input,
                                          const Shape& weight_shape,
                                          std::size_t stride,
                                          std::size_t padding) {
  const Shape& is = input.shape();
  const Shape& gs = grad_out.shape();
  const std::size_t k = weight_shape.height;
  const long pad = static_cast<long>(padding);
  BasicTensor<Real> out(weight_shape);
  parallel_for(weight_shape.batch, [&](std::size_t oc) {
    for (std::size_t ic = 0; ic < weight_shape.channels; ++ic) {
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          double acc = 0.0;
          for (std::size_t n = 0; n < gs.batch; ++n) {
            for (std::size_t oy = 0; oy < gs.height; ++oy) {
              const long iy = static_cast<long>(oy * stride + ky) - pad;
              if (iy < 0 || iy >= static_cast<long>(is.height)) continue;
              for (std::size_t ox = 0; ox < gs.width; ++ox) {
                const long ix = static_cast<long>(ox * stride + kx) - pad;
                if (ix < 0 || ix >= static_cast<long>(is.width)) continue;
                acc += static_cast<double>(grad_out(n, oc, oy, ox)) *
                       static_cast<double>(input(n, ic, iy, ix));
              }
            }
          }
          out(oc, ic, ky, kx) = static_cast<Real>(acc);
        }
      }
    }
  });
  return out;
}

template <typename Real>
BasicTensor<Real> conv_transpose2d_reference(const BasicTensor<Real>& input,
                                             const BasicTensor<Real>& weights,
                                             std::size_t stride,
                                             std::size_t padding) {
  const Shape& is = input.shape();
  const Shape& ws = weights.shape();
  check_conv_operands(is, ws);
  const std::size_t k = ws.height;
  const std::size_t oh = deconv_out_extent(is.height, k, stride, padding);
  const std::size_t ow = deconv_out_extent(is.width, k, stride, padding);
  const Shape os{is.batch, ws.batch, oh, ow};
  std::vector<double> acc(os.numel(), 0.0);
  const long pad = static_cast<long>(padding);
  for (std::size_t n = 0; n < is.batch; ++n) {
    for (std::size_t oc = 0; oc < ws.batch; ++oc) {
      for (std::size_t ic = 0; ic < is.channels; ++ic) {
        for (std::size_t iy = 0; iy < is.height; ++iy) {
          for (std::size_t ix = 0; ix < is.width; ++ix) {
            const double v = input(n, ic, iy, ix);
            for (std::size_t ky = 0; ky < k; ++ky) {
              const long y = static_cast<long>(iy * stride + ky) - pad;
              if (y < 0 || y >= static_cast<long>(oh)) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long x = static_cast<long>(ix * stride + kx) - pad;
                if (x < 0 || x >= static_cast<long>(ow)) continue;
                acc[((n * os.channels + oc) * oh + y) * ow + x] +=
                    v * weights(oc, ic, ky, kx);
              }
            }
          }
        }
      }
    }
  }
  return BasicTensor<Real>(os, std::vector<Real>(acc.begin(), acc.end()));
}

template <typename Real>
BasicTensor<Real> conv_transpose2d_backward_input(
    const BasicTensor<Real>& grad_out, const BasicTensor<Real>& weights,
    const Shape& input_shape, std::size_t stride, std::size_t padding) {
  const Shape& gs = grad_out.shape();
  const std::size_t k = weights.shape().height;
  const long pad = static_cast<long>(padding);
  BasicTensor<Real> out(input_shape);
  for (std::size_t n = 0; n < input_shape.batch; ++n) {
    for (std::size_t ic = 0; ic < input_shape.channels; ++ic) {
      for (std::size_t iy = 0; iy < input_shape.height; ++iy) {
        for (std::size_t ix = 0; ix < input_shape.width; ++ix) {
          double acc = 0.0;
          for (std::size_t oc = 0; oc < gs.channels; ++oc) {
            for (std::size_t ky = 0; ky < k; ++ky) {
              const long y = static_cast<long>(iy * stride + ky) - pad;
              if (y < 0 || y >= static_cast<long>(gs.height)) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long x = static_cast<long>(ix * stride + kx) - pad;
                if (x < 0 || x >= static_cast<long>(gs.width)) continue;
                acc += static_cast<double>(grad_out(n, oc, y, x)) *
                       weights(oc, ic, ky, kx);
              }
            }
          }
          out(n, ic, iy, ix) = static_cast<Real>(acc);
        }
      }
    }
  }
  return out;
}

template <typename Real>
BasicTensor<Real> conv_transpose2d_backward_weights(
    const BasicTensor<Real>& grad_out, const BasicTensor<Real>& input,
    const Shape& weight_shape, std::size_t stride, std::size_t padding) {
  const Shape& is = input.shape();
  const Shape& gs = grad_out.shape();
  const std::size_t k = weight_shape.height;
  const long pad = static_cast<long>(padding);
  BasicTensor<Real> out(weight_shape);
  for (std::size_t oc = 0; oc < weight_shape.batch; ++oc) {
    for (std::size_t ic = 0; ic < weight_shape.channels; ++ic) {
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          double acc = 0.0;
          for (std::size_t n = 0; n < is.batch; ++n) {
            for (std::size_t iy = 0; iy < is.height; ++iy) {
              const long y = static_cast<long>(iy * stride + ky) - pad;
              if (y < 0 || y >= static_cast<long>(gs.height)) continue;
              for (std::size_t ix = 0; ix < is.width; ++ix) {
                const long x = static_cast<long>(ix * stride + kx) - pad;
                if (x < 0 || x >= static_cast<long>(gs.width)) continue;
                acc += static_cast<double>(grad_out(n, oc, y, x)) *
                       input(n, ic, iy, ix);
              }
            }
          }
          out(oc, ic, ky, kx) = static_cast<Real>(acc);
        }
      }
    }
  }
  return out;
}

template <typename Real>
BasicTensor<Real> pad2d(const BasicTensor<Real>& x, std::size_t padding,
                        Real value) {
  if (padding == 0) return x;
  const Shape& s = x.shape();
  BasicTensor<Real> out(
      Shape{s.batch, s.channels, s.height + 2 * padding, s.width + 2 * padding},
      value);
  for (std::size_t n = 0; n < s.batch; ++n)
    for (std::size_t c = 0; c < s.channels; ++c)
      for (std::size_t y = 0; y < s.height; ++y)
        for (std::size_t xx = 0; xx < s.width; ++xx)
          out(n, c, y + padding, xx + padding) = x(n, c, y, xx);
  return out;
}

template <typename Real>
BasicTensor<Real> crop2d(const BasicTensor<Real>& x, std::size_t padding) {
  if (padding == 0) return x;
  const Shape& s = x.shape();
  if (s.height <= 2 * padding || s.width <= 2 * padding) {
    throw DimensionError("cannot crop " + std::to_string(padding) + " from " +
                         s.str());
  }
  BasicTensor<Real> out(Shape{s.batch, s.channels, s.height - 2 * padding,
                              s.width - 2 * padding});
  const Shape& o = out.shape();
  for (std::size_t n = 0; n < o.batch; ++n)
    for (std::size_t c = 0; c < o.channels; ++c)
      for (std::size_t y = 0; y < o.height; ++y)
        for (std::size_t xx = 0; xx < o.width; ++xx)
          out(n, c, y, xx) = x(n, c, y + padding, xx + padding);
  return out;
}

template <typename Real>
BasicTensor<Real> avg_pool2d(const BasicTensor<Real>& input, std::size_t window,
                             std::size_t stride) {
  const Shape& s = input.shape();
  if (window == 0 || stride == 0) {
    throw DimensionError("pooling window and stride must be >= 1");
  }
  if (window > s.height || window > s.width) {
    throw DimensionError("pooling window " + std::to_string(window) +
                         " larger than input " + s.str());
  }
  const std::size_t oh = (s.height - window) / stride + 1;
  const std::size_t ow = (s.width - window) / stride + 1;
  BasicTensor<Real> out(Shape{s.batch, s.channels, oh, ow});
  const double inv = 1.0 / static_cast<double>(window * window);
  for (std::size_t n = 0; n < s.batch; ++n)
    for (std::size_t c = 0; c < s.channels; ++c)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double acc = 0.0;
          for (std::size_t dy = 0; dy < window; ++dy)
            for (std::size_t dx = 0; dx < window; ++dx)
              acc += input(n, c, oy * stride + dy, ox * stride + dx);
          out(n, c, oy, ox) = static_cast<Real>(acc * inv);
        }
  return out;
}

template <typename Real>
BasicTensor<Real> avg_pool2d_backward(const BasicTensor<Real>& grad_out,
                                      const Shape& input_shape,
                                      std::size_t window, std::size_t stride) {
  const Shape& g = grad_out.shape();
  std::vector<double> acc(input_shape.numel(), 0.0);
  const double inv = 1.0 / static_cast<double>(window * window);
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t c = 0; c < g.channels; ++c)
      for (std::size_t oy = 0; oy < g.height; ++oy)
        for (std::size_t ox = 0; ox < g.width; ++ox) {
          const double v = grad_out(n, c, oy, ox) * inv;
          for (std::size_t dy = 0; dy < window; ++dy)
            for (std::size_t dx = 0; dx < window; ++dx)
              acc[((n * input_shape.channels + c) * input_shape.height +
                   oy * stride + dy) * input_shape.width + ox * stride + dx] += v;
        }
  return BasicTensor<Real>(input_shape, std::vector<Real>(acc.begin(), acc.end()));
}

template <typename Real>
BasicTensor<Real> global_avg_pool(const BasicTensor<Real>& input) {
  const Shape& s = input.shape();
  BasicTensor<Real> out(Shape{s.batch, s.channels, 1, 1});
  auto src = input.data();
  for (std::size_t nc = 0; nc < s.batch * s.channels; ++nc) {
    double acc = 0.0;
    for (std::size_t i = 0; i < s.plane(); ++i) acc += src[nc * s.plane() + i];
    out[nc] = static_cast<Real>(acc / static_cast<double>(s.plane()));
  }
  return out;
}

template <typename Real>
BasicTensor<Real> concat_channels(const BasicTensor<Real>& a,
                                  const BasicTensor<Real>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.batch != sb.batch || sa.height != sb.height || sa.width != sb.width) {
    throw DimensionError("concat_channels: " + sa.str() + " vs " + sb.str());
  }
  BasicTensor<Real> out(
      Shape{sa.batch, sa.channels + sb.channels, sa.height, sa.width});
  const std::size_t pa = sa.channels * sa.plane();
  const std::size_t pb = sb.channels * sb.plane();
  auto dst = out.data();
  for (std::size_t n = 0; n < sa.batch; ++n) {
    std::copy_n(a.data().begin() + n * pa, pa, dst.begin() + n * (pa + pb));
    std::copy_n(b.data().begin() + n * pb, pb, dst.begin() + n * (pa + pb) + pa);
  }
  return out;
}

template <typename Real>
BasicTensor<Real> slice_channels(const BasicTensor<Real>& x, std::size_t begin,
                                 std::size_t count) {
  const Shape& s = x.shape();
  if (count == 0 || begin + count > s.channels) {
    throw DimensionError("channel slice [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for " +
                         s.str());
  }
  BasicTensor<Real> out(Shape{s.batch, count, s.height, s.width});
  const std::size_t plane = s.plane();
  for (std::size_t n = 0; n < s.batch; ++n) {
    std::copy_n(x.data().begin() + (n * s.channels + begin) * plane,
                count * plane, out.data().begin() + n * count * plane);
  }
  return out;
}

template <typename Real>
std::pair<BasicTensor<Real>, BasicTensor<Real>> split_channels(
    const BasicTensor<Real>& x, std::size_t first) {
  const std::size_t c = x.shape().channels;
  if (first < 1 || first >= c) {
    throw DimensionError("split point " + std::to_string(first) +
                         " out of range for " + x.shape().str());
  }
  return {slice_channels(x, 0, first), slice_channels(x, first, c - first)};
}

template <typename Real>
BasicTensor<Real> add(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  BasicTensor<Real> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <typename Real>
BasicTensor<Real> scale(const BasicTensor<Real>& a, Real factor) {
  return map(a, [factor](Real v) { return v * factor; });
}

template <typename Real>
BatchNormParams<Real>::BatchNormParams(const std::string& prefix,
                                       std::size_t channels)
    : scale(prefix + ".scale", BasicTensor<Real>(Shape{1, channels, 1, 1}, Real(1))),
      shift(prefix + ".shift", BasicTensor<Real>(Shape{1, channels, 1, 1})),
      running_mean(prefix + ".running_mean",
                   BasicTensor<Real>(Shape{1, channels, 1, 1}), false),
      running_var(prefix + ".running_var",
                  BasicTensor<Real>(Shape{1, channels, 1, 1}, Real(1)), false) {}

template <typename Real>
BasicTensor<Real> batch_norm_forward(const BasicTensor<Real>& x,
                                     BatchNormParams<Real>& p, bool training,
                                     BatchNormCache* cache) {
  const Shape& s = x.shape();
  if (p.channels() != s.channels) {
    throw DimensionError("batch norm has " + std::to_string(p.channels()) +
                         " channels, input " + s.str());
  }
  const std::size_t count = s.batch * s.plane();
  std::vector<double> mean(s.channels), inv_std(s.channels);
  for (std::size_t c = 0; c < s.channels; ++c) {
    double m, var;
    if (training) {
      double sum = 0.0;
      for (std::size_t n = 0; n < s.batch; ++n)
        for (std::size_t i = 0; i < s.plane(); ++i)
          sum += x[(n * s.channels + c) * s.plane() + i];
      m = sum / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t n = 0; n < s.batch; ++n)
        for (std::size_t i = 0; i < s.plane(); ++i) {
          const double d = x[(n * s.channels + c) * s.plane() + i] - m;
          sq += d * d;
        }
      var = sq / static_cast<double>(count);
      const double unbiased =
          count > 1 ? sq / static_cast<double>(count - 1) : var;
      const double mom = p.momentum;
      p.running_mean.value[c] =
          static_cast<Real>((1.0 - mom) * p.running_mean.value[c] + mom * m);
      p.running_var.value[c] =
          static_cast<Real>((1.0 - mom) * p.running_var.value[c] + mom * unbiased);
    } else {
      m = p.running_mean.value[c];
      var = p.running_var.value[c];
    }
    mean[c] = m;
    inv_std[c] = 1.0 / std::sqrt(var + static_cast<double>(p.epsilon));
  }
  BasicTensor<Real> out(s);
  for (std::size_t n = 0; n < s.batch; ++n)
    for (std::size_t c = 0; c < s.channels; ++c) {
      const double g = p.scale.value[c];
      const double b = p.shift.value[c];
      for (std::size_t i = 0; i < s.plane(); ++i) {
        const std::size_t idx = (n * s.channels + c) * s.plane() + i;
        out[idx] = static_cast<Real>(g * (x[idx] - mean[c]) * inv_std[c] + b);
      }
    }
  if (cache) {
    cache->mean = std::move(mean);
    cache->inv_std = std::move(inv_std);
    cache->training = training;
  }
  return out;
}

template <typename Real>
BasicTensor<Real> hardtanh_forward(const BasicTensor<Real>& x) {
  return map(x, [](Real v) {
    if (v >= Real(1)) return Real(1);
    if (v < Real(-1)) return Real(-1);
    return v;
  });
}

template <typename Real>
BasicTensor<Real> relu_forward(const BasicTensor<Real>& x) {
  return map(x, [](Real v) { return v > Real(0) ? v : Real(0); });
}

template <typename Real>
BasicTensor<Real> prelu_forward(const BasicTensor<Real>& x,
                                const BasicTensor<Real>& slope) {
  const Shape& s = x.shape();
  if (slope.size() != s.channels) {
    throw DimensionError("prelu slope " + slope.shape().str() +
                         " does not match input " + s.str());
  }
  BasicTensor<Real> out(s);
  for (std::size_t n = 0; n < s.batch; ++n)
    for (std::size_t c = 0; c < s.channels; ++c)
      for (std::size_t i = 0; i < s.plane(); ++i) {
        const std::size_t idx = (n * s.channels + c) * s.plane() + i;
        out[idx] = x[idx] > Real(0) ? x[idx] : slope[c] * x[idx];
      }
  return out;
}

template <typename Real>
Real l1_loss(const BasicTensor<Real>& pred, const BasicTensor<Real>& target) {
  require_same_shape(pred.shape(), target.shape(), "l1_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    acc += std::abs(static_cast<double>(pred[i]) - target[i]);
  }
  return static_cast<Real>(acc / static_cast<double>(pred.size()));
}

#define BIDRN_INSTANTIATE_OPS(R)                                                \
  template BasicTensor<R> conv2d_reference(const BasicTensor<R>&,               \
                                           const BasicTensor<R>&, std::size_t,  \
                                           std::size_t);                        \
  template BasicTensor<R> conv2d_backward_input(                                \
      const BasicTensor<R>&, const BasicTensor<R>&, const Shape&, std::size_t,  \
      std::size_t);                                                             \
  template BasicTensor<R> conv2d_backward_weights(                              \
      const BasicTensor<R>&, const BasicTensor<R>&, const Shape&, std::size_t,  \
      std::size_t);                                                             \
  template BasicTensor<R> conv_transpose2d_reference(                           \
      const BasicTensor<R>&, const BasicTensor<R>&, std::size_t, std::size_t);  \
  template BasicTensor<R> conv_transpose2d_backward_input(                      \
      const BasicTensor<R>&, const BasicTensor<R>&, const Shape&, std::size_t,  \
      std::size_t);                                                             \
  template BasicTensor<R> conv_transpose2d_backward_weights(                    \
      const BasicTensor<R>&, const BasicTensor<R>&, const Shape&, std::size_t,  \
      std::size_t);                                                             \
  template BasicTensor<R> pad2d(const BasicTensor<R>&, std::size_t, R);         \
  template BasicTensor<R> crop2d(const BasicTensor<R>&, std::size_t);           \
  template BasicTensor<R> avg_pool2d(const BasicTensor<R>&, std::size_t,        \
                                     std::size_t);                              \
  template BasicTensor<R> avg_pool2d_backward(const BasicTensor<R>&,            \
                                              const Shape&, std::size_t,        \
                                              std::size_t);                     \
  template BasicTensor<R> global_avg_pool(const BasicTensor<R>&);               \
  template BasicTensor<R> concat_channels(const BasicTensor<R>&,                \
                                          const BasicTensor<R>&);               \
  template std::pair<BasicTensor<R>, BasicTensor<R>> split_channels(            \
      const BasicTensor<R>&, std::size_t);                                      \
  template BasicTensor<R> slice_channels(const BasicTensor<R>&, std::size_t,    \
                                         std::size_t);                          \
  template BasicTensor<R> add(const BasicTensor<R>&, const BasicTensor<R>&);    \
  template BasicTensor<R> scale(const BasicTensor<R>&, R);                      \
  template struct BatchNormParams<R>;                                           \
  template BasicTensor<R> batch_norm_forward(const BasicTensor<R>&,             \
                                             BatchNormParams<R>&, bool,         \
                                             BatchNormCache*);                  \
  template BasicTensor<R> hardtanh_forward(const BasicTensor<R>&);              \
  template BasicTensor<R> relu_forward(const BasicTensor<R>&);                  \
  template BasicTensor<R> prelu_forward(const BasicTensor<R>&,                  \
                                        const BasicTensor<R>&);                 \
  template R l1_loss(const BasicTensor<R>&, const BasicTensor<R>&);

BIDRN_INSTANTIATE_OPS(float)
BIDRN_INSTANTIATE_OPS(double)

}  // namespace bidrn
