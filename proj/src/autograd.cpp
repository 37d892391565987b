#include "bidrn/autograd.hpp"

#include <atomic>
#include <cmath>

#include "bidrn/errors.hpp"

namespace bidrn::ag {

const char* tag_name(OpTag tag) {
  switch (tag) {
    case OpTag::Input: return "input";
    case OpTag::Param: return "param";
    case OpTag::Sign: return "sign";
    case OpTag::Hardtanh: return "hardtanh";
    case OpTag::Relu: return "relu";
    case OpTag::Prelu: return "prelu";
    case OpTag::Rprelu: return "rprelu";
    case OpTag::Conv2d: return "conv2d";
    case OpTag::BinaryConv2d: return "binary_conv2d";
    case OpTag::BinaryDeconv2d: return "binary_deconv2d";
    case OpTag::AvgPool: return "avg_pool2d";
    case OpTag::GlobalAvgPool: return "global_avg_pool";
    case OpTag::Concat: return "concat_channels";
    case OpTag::Slice: return "slice_channels";
    case OpTag::Add: return "add";
    case OpTag::Scale: return "scale";
    case OpTag::BatchNorm: return "batch_norm";
    case OpTag::Reshape: return "reshape";
    case OpTag::SoftArgmax: return "soft_argmax";
    case OpTag::Exp: return "exp";
    case OpTag::L1Loss: return "l1_loss";
  }
  return "unknown";
}

namespace {
std::atomic<bool> g_ste_fault{false};

// Backward factor for every Sign. The fault swaps in the plain clipped
// identity (gradient 1 inside [-1, 1]).
template <typename Real>
Real ste_backward(Real x) {
  if (g_ste_fault.load(std::memory_order_relaxed)) {
    return (x >= Real(-1) && x < Real(1)) ? Real(1) : Real(0);
  }
  return ste_derivative(x);
}
}  // namespace

namespace testing {
void set_ste_fault(bool enabled) { g_ste_fault.store(enabled); }
bool ste_fault() { return g_ste_fault.load(); }
}  // namespace testing

template <typename Real>
typename Tape<Real>::TensorT& Tape<Real>::Grads::operator[](std::size_t i) {
  return tape_.grad_buffer(inputs_.at(i));
}

template <typename Real>
ValueId Tape<Real>::input(TensorT value) {
  values_.push_back(std::move(value));
  grads_.emplace_back();
  params_.push_back(nullptr);
  return values_.size() - 1;
}

template <typename Real>
ValueId Tape<Real>::param(Parameter<Real>& p) {
  const ValueId id = input(p.value);
  params_.back() = &p;
  return id;
}

template <typename Real>
ValueId Tape<Real>::record(OpTag tag, std::vector<ValueId> inputs, TensorT value,
                           BackwardFn backward) {
  const ValueId out = input(std::move(value));
  for (ValueId in : inputs) {
    if (in >= out) throw ContractError("tape input recorded out of order");
  }
  if (options_.record) {
    nodes_.push_back(Node{tag, std::move(inputs), out, std::move(backward)});
  }
  return out;
}

template <typename Real>
const typename Tape<Real>::TensorT* Tape<Real>::grad(ValueId id) const {
  const auto& g = grads_.at(id);
  return g ? &*g : nullptr;
}

template <typename Real>
typename Tape<Real>::TensorT& Tape<Real>::grad_buffer(ValueId id) {
  auto& g = grads_.at(id);
  if (!g) g.emplace(values_[id].shape());
  return *g;
}

template <typename Real>
void Tape<Real>::backward(ValueId loss) {
  if (!options_.record) throw ContractError("backward on a non-recording tape");
  if (values_.at(loss).size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        values_[loss].shape().str());
  }
  grad_buffer(loss)[0] = Real(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output > loss || !grads_[it->output]) continue;
    Grads grads(*this, it->inputs);
    it->backward(*grads_[it->output], grads);
  }
  for (std::size_t id = 0; id < params_.size(); ++id) {
    if (params_[id] == nullptr || !grads_[id]) continue;
    auto& dst = params_[id]->grad;
    if (!(dst.shape() == grads_[id]->shape())) dst = TensorT(grads_[id]->shape());
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += (*grads_[id])[i];
  }
}

namespace {

template <typename Real>
void accumulate(BasicTensor<Real>& dst, const BasicTensor<Real>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename Real>
Real sgn(Real v) {
  return static_cast<Real>((v > Real(0)) - (v < Real(0)));
}

template <typename Real>
BasicTensor<Real> sign_like(const BasicTensor<Real>& x, SignMode mode) {
  return mode == SignMode::Hard ? sign_forward(x) : ste_surrogate_forward(x);
}

template <typename Real>
std::size_t channel_of(const Shape& s, std::size_t idx) {
  return (idx / s.plane()) % s.channels;
}

}  // namespace

template <typename Real>
ValueId sign(Tape<Real>& t, ValueId x) {
  const auto& xv = t.value(x);
  return t.record(OpTag::Sign, {x}, sign_like(xv, t.options().sign_mode),
                  [xv](const BasicTensor<Real>& g, auto& grads) {
                    auto& gx = grads[0];
                    for (std::size_t i = 0; i < g.size(); ++i)
                      gx[i] += g[i] * ste_backward(xv[i]);
                  });
}

template <typename Real>
ValueId hardtanh(Tape<Real>& t, ValueId x) {
  const auto& xv = t.value(x);
  return t.record(OpTag::Hardtanh, {x}, hardtanh_forward(xv),
                  [xv](const BasicTensor<Real>& g, auto& grads) {
                    auto& gx = grads[0];
                    for (std::size_t i = 0; i < g.size(); ++i)
                      if (xv[i] >= Real(-1) && xv[i] < Real(1)) gx[i] += g[i];
                  });
}

template <typename Real>
ValueId relu(Tape<Real>& t, ValueId x) {
  const auto& xv = t.value(x);
  return t.record(OpTag::Relu, {x}, relu_forward(xv),
                  [xv](const BasicTensor<Real>& g, auto& grads) {
                    auto& gx = grads[0];
                    for (std::size_t i = 0; i < g.size(); ++i)
                      if (xv[i] > Real(0)) gx[i] += g[i];
                  });
}

template <typename Real>
ValueId prelu(Tape<Real>& t, ValueId x, Parameter<Real>& slope) {
  const ValueId s = t.param(slope);
  const auto& xv = t.value(x);
  const auto& sv = t.value(s);
  return t.record(OpTag::Prelu, {x, s}, prelu_forward(xv, sv),
                  [xv, sv](const BasicTensor<Real>& g, auto& grads) {
                    auto& gx = grads[0];
                    auto& gs = grads[1];
                    const Shape& sh = xv.shape();
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      const std::size_t c = channel_of<Real>(sh, i);
                      if (xv[i] > Real(0)) {
                        gx[i] += g[i];
                      } else {
                        gx[i] += g[i] * sv[c];
                        gs[c] += g[i] * xv[i];
                      }
                    }
                  });
}

template <typename Real>
ValueId rprelu(Tape<Real>& t, ValueId x, Parameter<Real>& gamma,
               Parameter<Real>& zeta, Parameter<Real>& beta) {
  const std::size_t channels = t.value(x).shape().channels;
  if (gamma.value.size() != channels || zeta.value.size() != channels ||
      beta.value.size() != channels) {
    throw DimensionError("rprelu parameters do not match input " +
                         t.value(x).shape().str());
  }
  const ValueId gi = t.param(gamma);
  const ValueId zi = t.param(zeta);
  const ValueId bi = t.param(beta);
  const auto& xv = t.value(x);
  const Shape& sh = xv.shape();
  const auto& gv = t.value(gi);
  const auto& zv = t.value(zi);
  const auto& bv = t.value(bi);
  BasicTensor<Real> out(sh);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t c = channel_of<Real>(sh, i);
    const Real d = xv[i] - gv[c];
    out[i] = (xv[i] > gv[c] ? d : bv[c] * d) + zv[c];
  }
  return t.record(OpTag::Rprelu, {x, gi, zi, bi}, std::move(out),
                  [xv, gv, bv](const BasicTensor<Real>& g, auto& grads) {
                    auto& gx = grads[0];
                    auto& gg = grads[1];
                    auto& gz = grads[2];
                    auto& gb = grads[3];
                    const Shape& s = xv.shape();
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      const std::size_t c = channel_of<Real>(s, i);
                      const Real slope = xv[i] > gv[c] ? Real(1) : bv[c];
                      gx[i] += g[i] * slope;
                      gg[c] -= g[i] * slope;
                      gz[c] += g[i];
                      if (!(xv[i] > gv[c])) gb[c] += g[i] * (xv[i] - gv[c]);
                    }
                  });
}

template <typename Real>
ValueId conv2d(Tape<Real>& t, ValueId x, Parameter<Real>& weights,
               std::size_t stride, std::size_t padding) {
  const ValueId w = t.param(weights);
  const auto& xv = t.value(x);
  const auto& wv = t.value(w);
  return t.record(
      OpTag::Conv2d, {x, w}, conv2d_reference(xv, wv, stride, padding),
      [xv, wv, stride, padding](const BasicTensor<Real>& g, auto& grads) {
        accumulate(grads[0],
                   conv2d_backward_input(g, wv, xv.shape(), stride, padding));
        accumulate(grads[1],
                   conv2d_backward_weights(g, xv, wv.shape(), stride, padding));
      });
}

namespace {

// Shared backward for the two binarized weight paths: grad of latent weights
// given grad of the effective weights alpha_i * s(w).
template <typename Real>
void latent_weight_grad(const BasicTensor<Real>& g_eff,
                        const BasicTensor<Real>& latent,
                        const BasicTensor<Real>& s_w,
                        const std::vector<Real>& alpha, bool alpha_is_const,
                        BasicTensor<Real>& g_latent) {
  const std::size_t cout = latent.shape().batch;
  const std::size_t fan_in = latent.size() / cout;
  for (std::size_t oc = 0; oc < cout; ++oc) {
    double through_alpha = 0.0;
    if (!alpha_is_const) {
      for (std::size_t j = 0; j < fan_in; ++j) {
        const std::size_t i = oc * fan_in + j;
        through_alpha += static_cast<double>(g_eff[i]) * s_w[i];
      }
      through_alpha /= static_cast<double>(fan_in);
    }
    for (std::size_t j = 0; j < fan_in; ++j) {
      const std::size_t i = oc * fan_in + j;
      const double direct =
          static_cast<double>(g_eff[i]) * alpha[oc] * ste_backward(latent[i]);
      g_latent[i] += static_cast<Real>(direct + through_alpha * sgn(latent[i]));
    }
  }
}

template <typename Real>
BasicTensor<Real> effective_weights(const BasicTensor<Real>& s_w,
                                    const std::vector<Real>& alpha) {
  BasicTensor<Real> out(s_w.shape());
  const std::size_t fan_in = s_w.size() / alpha.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha[i / fan_in] * s_w[i];
  return out;
}

}  // namespace

template <typename Real>
ValueId binary_conv2d(Tape<Real>& t, ValueId x, BinaryConv2dParams<Real>& p) {
  const ValueId w = t.param(p.latent_weights);
  const auto& xv = t.value(x);
  const auto& latent = t.value(w);
  const std::vector<Real> alpha = p.finalized ? p.alpha : compute_alpha(latent);
  const SignMode mode = t.options().sign_mode;
  const bool alpha_const = p.finalized || t.options().detach_alpha;
  const std::size_t stride = p.stride;
  const std::size_t padding = p.padding;

  // Activations padded with zeros before binarization: Sign(0) = +1 in hard
  // mode, the surrogate gives 0.
  BasicTensor<Real> s_a = sign_like(pad2d(xv, padding, Real(0)), mode);
  BasicTensor<Real> s_w = sign_like(latent, mode);
  BasicTensor<Real> w_eff = effective_weights(s_w, alpha);

  BasicTensor<Real> out;
  if (mode == SignMode::Hard) {
    out = scale_accumulators<Real>(binary_conv2d_accumulate(xv, p), alpha);
  } else {
    out = conv2d_reference(s_a, w_eff, stride, 0);
  }
  if (!t.options().record) return t.record(OpTag::BinaryConv2d, {x, w}, std::move(out), {});

  return t.record(
      OpTag::BinaryConv2d, {x, w}, std::move(out),
      [xv, latent, s_a = std::move(s_a), s_w = std::move(s_w),
       w_eff = std::move(w_eff), alpha, alpha_const, stride,
       padding](const BasicTensor<Real>& g, auto& grads) {
        BasicTensor<Real> g_sa =
            crop2d(conv2d_backward_input(g, w_eff, s_a.shape(), stride, 0), padding);
        auto& gx = grads[0];
        for (std::size_t i = 0; i < gx.size(); ++i)
          gx[i] += g_sa[i] * ste_backward(xv[i]);
        BasicTensor<Real> g_eff = conv2d_backward_weights(g, s_a, latent.shape(), stride, 0);
        latent_weight_grad(g_eff, latent, s_w, alpha, alpha_const, grads[1]);
      });
}

template <typename Real>
ValueId binary_deconv2d(Tape<Real>& t, ValueId x, BinaryConv2dParams<Real>& p,
                        std::size_t out_stride) {
  const ValueId w = t.param(p.latent_weights);
  const auto& xv = t.value(x);
  const auto& latent = t.value(w);
  const std::vector<Real> alpha = p.finalized ? p.alpha : compute_alpha(latent);
  const SignMode mode = t.options().sign_mode;
  const bool alpha_const = p.finalized || t.options().detach_alpha;
  const std::size_t padding = p.padding;

  BasicTensor<Real> s_a = sign_like(xv, mode);
  BasicTensor<Real> s_w = sign_like(latent, mode);
  BasicTensor<Real> w_eff = effective_weights(s_w, alpha);
  BasicTensor<Real> out;
  if (mode == SignMode::Hard) {
    out = scale_accumulators<Real>(binary_deconv2d_accumulate(xv, p, out_stride),
                                   alpha);
  } else {
    out = conv_transpose2d_reference(s_a, w_eff, out_stride, padding);
  }
  if (!t.options().record) return t.record(OpTag::BinaryDeconv2d, {x, w}, std::move(out), {});

  return t.record(
      OpTag::BinaryDeconv2d, {x, w}, std::move(out),
      [xv, latent, s_a = std::move(s_a), s_w = std::move(s_w),
       w_eff = std::move(w_eff), alpha, alpha_const, out_stride,
       padding](const BasicTensor<Real>& g, auto& grads) {
        BasicTensor<Real> g_sa = conv_transpose2d_backward_input(
            g, w_eff, s_a.shape(), out_stride, padding);
        auto& gx = grads[0];
        for (std::size_t i = 0; i < gx.size(); ++i)
          gx[i] += g_sa[i] * ste_backward(xv[i]);
        BasicTensor<Real> g_eff = conv_transpose2d_backward_weights(
            g, s_a, latent.shape(), out_stride, padding);
        latent_weight_grad(g_eff, latent, s_w, alpha, alpha_const, grads[1]);
      });
}

template <typename Real>
ValueId avg_pool2d(Tape<Real>& t, ValueId x, std::size_t window,
                   std::size_t stride) {
  const Shape in = t.value(x).shape();
  return t.record(OpTag::AvgPool, {x}, avg_pool2d(t.value(x), window, stride),
                  [in, window, stride](const BasicTensor<Real>& g, auto& grads) {
                    accumulate(grads[0], avg_pool2d_backward(g, in, window, stride));
                  });
}

template <typename Real>
ValueId global_avg_pool(Tape<Real>& t, ValueId x) {
  const Shape in = t.value(x).shape();
  return t.record(OpTag::GlobalAvgPool, {x}, global_avg_pool(t.value(x)),
                  [in](const BasicTensor<Real>& g, auto& grads) {
                    auto& gx = grads[0];
                    const Real inv = Real(1) / static_cast<Real>(in.plane());
                    for (std::size_t i = 0; i < gx.size(); ++i)
                      gx[i] += g[i / in.plane()] * inv;
                  });
}

template <typename Real>
ValueId concat_channels(Tape<Real>& t, ValueId a, ValueId b) {
  const std::size_t ca = t.value(a).shape().channels;
  const std::size_t cb = t.value(b).shape().channels;
  return t.record(OpTag::Concat, {a, b},
                  concat_channels(t.value(a), t.value(b)),
                  [ca, cb](const BasicTensor<Real>& g, auto& grads) {
                    accumulate(grads[0], slice_channels(g, 0, ca));
                    accumulate(grads[1], slice_channels(g, ca, cb));
                  });
}

template <typename Real>
ValueId slice_channels(Tape<Real>& t, ValueId x, std::size_t begin,
                       std::size_t count) {
  return t.record(OpTag::Slice, {x}, slice_channels(t.value(x), begin, count),
                  [begin, count](const BasicTensor<Real>& g, auto& grads) {
                    auto& gx = grads[0];
                    const Shape& s = gx.shape();
                    const std::size_t plane = s.plane();
                    for (std::size_t n = 0; n < s.batch; ++n)
                      for (std::size_t c = 0; c < count; ++c)
                        for (std::size_t i = 0; i < plane; ++i)
                          gx[(n * s.channels + begin + c) * plane + i] +=
                              g[(n * count + c) * plane + i];
                  });
}

template <typename Real>
ValueId add(Tape<Real>& t, ValueId a, ValueId b) {
  return t.record(OpTag::Add, {a, b}, add(t.value(a), t.value(b)),
                  [](const BasicTensor<Real>& g, auto& grads) {
                    accumulate(grads[0], g);
                    accumulate(grads[1], g);
                  });
}

template <typename Real>
ValueId scale(Tape<Real>& t, ValueId x, Real factor) {
  return t.record(OpTag::Scale, {x}, scale(t.value(x), factor),
                  [factor](const BasicTensor<Real>& g, auto& grads) {
                    auto& gx = grads[0];
                    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * factor;
                  });
}

template <typename Real>
ValueId batch_norm(Tape<Real>& t, ValueId x, BatchNormParams<Real>& p) {
  const ValueId gi = t.param(p.scale);
  const ValueId bi = t.param(p.shift);
  const auto& xv = t.value(x);
  BatchNormCache cache;
  BasicTensor<Real> out = batch_norm_forward(xv, p, t.options().training, &cache);
  const auto& gamma = t.value(gi);
  return t.record(
      OpTag::BatchNorm, {x, gi, bi}, std::move(out),
      [xv, gamma, cache = std::move(cache)](const BasicTensor<Real>& g, auto& grads) {
        const Shape& s = xv.shape();
        const std::size_t plane = s.plane();
        const double count = static_cast<double>(s.batch * plane);
        auto& gx = grads[0];
        auto& gg = grads[1];
        auto& gb = grads[2];
        for (std::size_t c = 0; c < s.channels; ++c) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t n = 0; n < s.batch; ++n)
            for (std::size_t i = 0; i < plane; ++i) {
              const std::size_t idx = (n * s.channels + c) * plane + i;
              const double xhat = (xv[idx] - cache.mean[c]) * cache.inv_std[c];
              sum_g += g[idx];
              sum_gx += g[idx] * xhat;
            }
          gg[c] += static_cast<Real>(sum_gx);
          gb[c] += static_cast<Real>(sum_g);
          const double k = gamma[c] * cache.inv_std[c];
          for (std::size_t n = 0; n < s.batch; ++n)
            for (std::size_t i = 0; i < plane; ++i) {
              const std::size_t idx = (n * s.channels + c) * plane + i;
              if (cache.training) {
                const double xhat = (xv[idx] - cache.mean[c]) * cache.inv_std[c];
                gx[idx] += static_cast<Real>(
                    k * (g[idx] - sum_g / count - xhat * sum_gx / count));
              } else {
                gx[idx] += static_cast<Real>(k * g[idx]);
              }
            }
        }
      });
}

template <typename Real>
ValueId reshape(Tape<Real>& t, ValueId x, const Shape& shape) {
  return t.record(OpTag::Reshape, {x}, t.value(x).reshaped(shape),
                  [](const BasicTensor<Real>& g, auto& grads) {
                    auto& gx = grads[0];
                    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                  });
}

template <typename Real>
ValueId exp(Tape<Real>& t, ValueId x) {
  BasicTensor<Real> out = map(t.value(x), [](Real v) { return std::exp(v); });
  BasicTensor<Real> saved = out;
  return t.record(OpTag::Exp, {x}, std::move(out),
                  [saved = std::move(saved)](const BasicTensor<Real>& g, auto& grads) {
                    auto& gx = grads[0];
                    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * saved[i];
                  });
}

template <typename Real>
ValueId l1_loss(Tape<Real>& t, ValueId pred, const BasicTensor<Real>& target) {
  const auto& pv = t.value(pred);
  const Real loss = l1_loss(pv, target);
  return t.record(OpTag::L1Loss, {pred}, BasicTensor<Real>::scalar(loss),
                  [pv, target](const BasicTensor<Real>& g, auto& grads) {
                    auto& gp = grads[0];
                    const Real k = g[0] / static_cast<Real>(pv.size());
                    for (std::size_t i = 0; i < gp.size(); ++i)
                      gp[i] += k * sgn(pv[i] - target[i]);
                  });
}

#define BIDRN_INSTANTIATE_AG(R)                                                 \
  template class Tape<R>;                                                       \
  template ValueId sign(Tape<R>&, ValueId);                                     \
  template ValueId hardtanh(Tape<R>&, ValueId);                                 \
  template ValueId relu(Tape<R>&, ValueId);                                     \
  template ValueId prelu(Tape<R>&, ValueId, Parameter<R>&);                     \
  template ValueId rprelu(Tape<R>&, ValueId, Parameter<R>&, Parameter<R>&,      \
                          Parameter<R>&);                                       \
  template ValueId conv2d(Tape<R>&, ValueId, Parameter<R>&, std::size_t,        \
                          std::size_t);                                         \
  template ValueId binary_conv2d(Tape<R>&, ValueId, BinaryConv2dParams<R>&);    \
  template ValueId binary_deconv2d(Tape<R>&, ValueId, BinaryConv2dParams<R>&,   \
                                   std::size_t);                                \
  template ValueId avg_pool2d(Tape<R>&, ValueId, std::size_t, std::size_t);     \
  template ValueId global_avg_pool(Tape<R>&, ValueId);                          \
  template ValueId concat_channels(Tape<R>&, ValueId, ValueId);                 \
  template ValueId slice_channels(Tape<R>&, ValueId, std::size_t, std::size_t); \
  template ValueId add(Tape<R>&, ValueId, ValueId);                             \
  template ValueId scale(Tape<R>&, ValueId, R);                                 \
  template ValueId batch_norm(Tape<R>&, ValueId, BatchNormParams<R>&);          \
  template ValueId reshape(Tape<R>&, ValueId, const Shape&);                    \
  template ValueId exp(Tape<R>&, ValueId);                                      \
  template ValueId l1_loss(Tape<R>&, ValueId, const BasicTensor<R>&);

BIDRN_INSTANTIATE_AG(float)
BIDRN_INSTANTIATE_AG(double)

}  // namespace bidrn::ag
