#include "bidrn/boxnet.hpp"

#include <algorithm>
#include <cmath>

#include "bidrn/errors.hpp"
#include "bidrn/layers.hpp"

namespace bidrn {
namespace {

template <typename Real>
SwitchableConv<Real> make_switchable(const std::string& name, std::size_t out_c,
                                     std::size_t in_c, std::size_t k,
                                     std::size_t stride, std::size_t padding,
                                     bool binarized, Initializer& init) {
  return SwitchableConv<Real>{
      BinaryConv2dParams<Real>(
          name, init.kaiming_uniform<Real>(Shape{out_c, in_c, k, k}, in_c * k * k),
          stride, padding),
      binarized};
}

// Per (n, j): softmax over the depth*H*W cells, kept in double.
template <typename Real>
std::vector<double> joint_softmax(const BasicTensor<Real>& v, std::size_t n,
                                  std::size_t j, std::size_t depth) {
  const Shape& s = v.shape();
  const std::size_t cells = depth * s.plane();
  const std::size_t base = (n * s.channels + j * depth) * s.plane();
  double mx = -INFINITY;
  for (std::size_t i = 0; i < cells; ++i) mx = std::max(mx, double(v[base + i]));
  std::vector<double> p(cells);
  double z = 0;
  for (std::size_t i = 0; i < cells; ++i) {
    p[i] = std::exp(double(v[base + i]) - mx);
    z += p[i];
  }
  for (auto& e : p) e /= z;
  return p;
}

template <typename Real>
void check_heatmap(const BasicTensor<Real>& v, std::size_t joints, std::size_t depth) {
  if (joints == 0 || depth == 0 || v.shape().channels != joints * depth) {
    throw DimensionError("heatmap with " + std::to_string(joints) + " joints x " +
                         std::to_string(depth) + " depth cannot hold " +
                         v.shape().str());
  }
}

// Cell coordinate `axis` (0 = x, 1 = y, 2 = z) of flat index i in a joint slice.
inline double cell_coord(std::size_t i, std::size_t axis, std::size_t h, std::size_t w) {
  switch (axis) {
    case 0: return double(i % w);
    case 1: return double((i / w) % h);
    default: return double(i / (w * h));
  }
}

template <typename Real>
BasicTensor<Real> soft_argmax_values(const BasicTensor<Real>& v, std::size_t joints,
                                     std::size_t depth, std::size_t coords) {
  check_heatmap(v, joints, depth);
  const Shape& s = v.shape();
  BasicTensor<Real> out(Shape{s.batch, joints, coords, 1});
  for (std::size_t n = 0; n < s.batch; ++n)
    for (std::size_t j = 0; j < joints; ++j) {
      const auto p = joint_softmax(v, n, j, depth);
      for (std::size_t a = 0; a < coords; ++a) {
        double e = 0;
        for (std::size_t i = 0; i < p.size(); ++i)
          e += p[i] * cell_coord(i, a, s.height, s.width);
        out[(n * joints + j) * coords + a] = static_cast<Real>(e);
      }
    }
  return out;
}

}  // namespace

template <typename Real>
std::vector<Parameter<Real>*> BoxNetParams<Real>::parameters() {
  std::vector<Parameter<Real>*> out{&heatmap_conv.conv.latent_weights};
  for (auto& d : deconvs) out.push_back(&d.conv.latent_weights);
  out.push_back(&box_conv.conv.latent_weights);
  for (auto& l : binary_linears) out.push_back(&l.latent_weights);
  out.push_back(&final_linear);
  return out;
}

template <typename Real>
std::size_t BoxNetParams<Real>::full_precision_linears() const {
  // binary_linears are always binarized; final_linear is always present.
  return final_linear.value.size() > 0 ? 1 : 0;
}

template <typename Real>
BoxNetParams<Real> make_boxnet(const BoxNetConfig& cfg) {
  if (cfg.in_channels == 0 || cfg.joints == 0 || cfg.depth == 0 || cfg.boxes == 0 ||
      cfg.deconv_channels == 0 || cfg.hidden == 0) {
    throw ConfigError("boxnet: every channel count must be >= 1");
  }
  BoxNetParams<Real> p;
  p.config = cfg;
  Initializer init(cfg.seed);
  const std::size_t jd = cfg.joints * cfg.depth;
  p.heatmap_conv = make_switchable<Real>("boxnet.heatmap.weight", jd, cfg.in_channels,
                                         3, 1, 1, cfg.binarized, init);
  std::size_t c = cfg.in_channels + jd;
  for (std::size_t i = 0; i < cfg.deconv_layers; ++i) {
    p.deconvs.push_back(make_switchable<Real>(
        "boxnet.deconv" + std::to_string(i) + ".weight", cfg.deconv_channels, c, 4, 2,
        1, cfg.binarized, init));
    c = cfg.deconv_channels;
  }
  p.box_conv = make_switchable<Real>("boxnet.box.weight", cfg.boxes, c, 3, 1, 1,
                                     cfg.binarized, init);
  std::size_t width = c;
  for (std::size_t i = 0; i < cfg.binary_linears; ++i) {
    p.binary_linears.emplace_back(
        "boxnet.linear" + std::to_string(i) + ".weight",
        init.kaiming_uniform<Real>(Shape{cfg.hidden, width, 1, 1}, width), 1, 0);
    width = cfg.hidden;
  }
  p.final_linear = Parameter<Real>(
      "boxnet.size.weight",
      init.kaiming_uniform<Real>(Shape{2 * cfg.boxes, width, 1, 1}, width));
  return p;
}

template <typename Real>
BasicHeatmap<Real> normalize(const BasicHeatmap<Real>& h) {
  check_heatmap(h.values, h.joints, h.depth);
  BasicHeatmap<Real> out{h.joints, h.depth, BasicTensor<Real>(h.values.shape())};
  const Shape& s = h.values.shape();
  for (std::size_t n = 0; n < s.batch; ++n)
    for (std::size_t j = 0; j < h.joints; ++j) {
      const auto p = joint_softmax(h.values, n, j, h.depth);
      const std::size_t base = (n * s.channels + j * h.depth) * s.plane();
      for (std::size_t i = 0; i < p.size(); ++i) out.values[base + i] = static_cast<Real>(p[i]);
    }
  return out;
}

template <typename Real>
BasicTensor<Real> soft_argmax(const BasicHeatmap<Real>& h) {
  return soft_argmax_values(h.values, h.joints, h.depth, 3);
}

namespace ag {
namespace {

template <typename Real>
ValueId soft_argmax_op(Tape<Real>& t, ValueId heatmap, std::size_t joints,
                       std::size_t depth, std::size_t coords) {
  const BasicTensor<Real>& v = t.value(heatmap);
  BasicTensor<Real> out = soft_argmax_values(v, joints, depth, coords);
  if (!t.options().record) return t.record(OpTag::SoftArgmax, {heatmap}, std::move(out), {});
  BasicTensor<Real> expect = out;
  return t.record(
      OpTag::SoftArgmax, {heatmap}, std::move(out),
      [v = BasicTensor<Real>(v), expect, joints, depth, coords](
          const BasicTensor<Real>& g, auto& grads) {
        // d c_a / d z_i = p_i (u_a(i) - c_a)
        const Shape& s = v.shape();
        auto& gz = grads[0];
        for (std::size_t n = 0; n < s.batch; ++n)
          for (std::size_t j = 0; j < joints; ++j) {
            const auto p = joint_softmax(v, n, j, depth);
            const std::size_t base = (n * s.channels + j * depth) * s.plane();
            const std::size_t o = (n * joints + j) * coords;
            for (std::size_t i = 0; i < p.size(); ++i) {
              double acc = 0;
              for (std::size_t a = 0; a < coords; ++a)
                acc += double(g[o + a]) *
                       (cell_coord(i, a, s.height, s.width) - double(expect[o + a]));
              gz[base + i] += static_cast<Real>(p[i] * acc);
            }
          }
      });
}

template <typename Real>
ValueId apply(Tape<Real>& t, ValueId x, SwitchableConv<Real>& c) {
  if (c.binarized) return binary_conv2d(t, x, c.conv);
  return conv2d(t, x, c.conv.latent_weights, c.conv.stride, c.conv.padding);
}

template <typename Real>
ValueId apply_transposed(Tape<Real>& t, ValueId x, SwitchableConv<Real>& c) {
  if (c.binarized) return binary_deconv2d(t, x, c.conv, c.conv.stride);
  // full-precision transposed conv on the latent weights
  const ValueId w = t.param(c.conv.latent_weights);
  const BasicTensor<Real>& xv = t.value(x);
  const BasicTensor<Real>& wv = t.value(w);
  const std::size_t s = c.conv.stride, pad = c.conv.padding;
  BasicTensor<Real> out = conv_transpose2d_reference(xv, wv, s, pad);
  if (!t.options().record) return t.record(OpTag::BinaryDeconv2d, {x, w}, std::move(out), {});
  return t.record(OpTag::BinaryDeconv2d, {x, w}, std::move(out),
                  [xv = BasicTensor<Real>(xv), wv = BasicTensor<Real>(wv), s,
                   pad](const BasicTensor<Real>& g, auto& grads) {
                    grads[0] = add(grads[0], conv_transpose2d_backward_input(
                                                 g, wv, xv.shape(), s, pad));
                    grads[1] = add(grads[1], conv_transpose2d_backward_weights(
                                                 g, xv, wv.shape(), s, pad));
                  });
}

}  // namespace

template <typename Real>
ValueId soft_argmax(Tape<Real>& t, ValueId heatmap, std::size_t joints,
                    std::size_t depth) {
  return soft_argmax_op(t, heatmap, joints, depth, 3);
}

template <typename Real>
BoxHeadIds box_head(Tape<Real>& t, ValueId feature, BoxNetParams<Real>& p) {
  const BoxNetConfig& cfg = p.config;
  if (t.value(feature).shape().channels != cfg.in_channels) {
    throw DimensionError("boxnet expects " + std::to_string(cfg.in_channels) +
                         " feature channels, got " + t.value(feature).shape().str());
  }
  BoxHeadIds ids{};
  ids.heatmap = apply(t, hardtanh(t, feature), p.heatmap_conv);
  ValueId d = concat_channels(t, feature, ids.heatmap);
  for (auto& dc : p.deconvs) d = apply_transposed(t, hardtanh(t, d), dc);
  const ValueId maps = apply(t, hardtanh(t, d), p.box_conv);
  ids.center = soft_argmax_op(t, maps, cfg.boxes, 1, 2);

  ValueId g = global_avg_pool(t, d);
  for (auto& l : p.binary_linears) g = binary_conv2d(t, hardtanh(t, g), l);
  const ValueId log_size = conv2d(t, hardtanh(t, g), p.final_linear, 1, 0);
  const std::size_t batch = t.value(log_size).shape().batch;
  ids.size = exp(t, reshape(t, log_size, Shape{batch, cfg.boxes, 2, 1}));
  return ids;
}

template <typename Real>
ValueId box_loss(Tape<Real>& t, const BoxHeadIds& pred,
                 const BoxPrediction<Real>& target) {
  const std::size_t nc = target.center.size();
  const std::size_t ns = target.size.size();
  const Real total = static_cast<Real>(nc + ns);
  const ValueId lc = l1_loss(t, pred.center, target.center);
  const ValueId ls = l1_loss(t, pred.size, target.size);
  return add(t, scale(t, lc, Real(nc) / total), scale(t, ls, Real(ns) / total));
}

}  // namespace ag

template <typename Real>
BasicHeatmap<Real> predict_heatmaps(const BasicTensor<Real>& feature,
                                    BoxNetParams<Real>& p, ag::TapeOptions mode) {
  mode.record = false;
  ag::Tape<Real> t(mode);
  const ag::ValueId f = t.input(feature);
  if (feature.shape().channels != p.config.in_channels) {
    throw DimensionError("boxnet expects " + std::to_string(p.config.in_channels) +
                         " feature channels, got " + feature.shape().str());
  }
  const ag::ValueId h = ag::apply(t, ag::hardtanh(t, f), p.heatmap_conv);
  return BasicHeatmap<Real>{p.config.joints, p.config.depth, t.value(h)};
}

template <typename Real>
BoxPrediction<Real> box_head_forward(const BasicTensor<Real>& feature,
                                     BoxNetParams<Real>& p, ag::TapeOptions mode) {
  mode.record = false;
  ag::Tape<Real> t(mode);
  const auto ids = ag::box_head(t, t.input(feature), p);
  return BoxPrediction<Real>{t.value(ids.center), t.value(ids.size)};
}

template <typename Real>
Real box_loss(const BoxPrediction<Real>& pred, const BoxPrediction<Real>& target) {
  if (!(pred.center.shape() == target.center.shape()) ||
      !(pred.size.shape() == target.size.shape())) {
    throw DimensionError("box count mismatch: predicted " + pred.center.shape().str() +
                         ", target " + target.center.shape().str());
  }
  double s = 0;
  for (std::size_t i = 0; i < pred.center.size(); ++i)
    s += std::abs(double(pred.center[i]) - double(target.center[i]));
  for (std::size_t i = 0; i < pred.size.size(); ++i)
    s += std::abs(double(pred.size[i]) - double(target.size[i]));
  return static_cast<Real>(s / double(pred.center.size() + pred.size.size()));
}

#define BIDRN_INSTANTIATE_BOXNET(R)                                                  \
  template struct BoxNetParams<R>;                                                   \
  template BoxNetParams<R> make_boxnet<R>(const BoxNetConfig&);                      \
  template BasicHeatmap<R> normalize(const BasicHeatmap<R>&);                        \
  template BasicTensor<R> soft_argmax(const BasicHeatmap<R>&);                       \
  template BasicHeatmap<R> predict_heatmaps(const BasicTensor<R>&, BoxNetParams<R>&, \
                                            ag::TapeOptions);                        \
  template BoxPrediction<R> box_head_forward(const BasicTensor<R>&, BoxNetParams<R>&, \
                                             ag::TapeOptions);                       \
  template R box_loss(const BoxPrediction<R>&, const BoxPrediction<R>&);             \
  template ag::ValueId ag::soft_argmax(ag::Tape<R>&, ag::ValueId, std::size_t,       \
                                       std::size_t);                                 \
  template ag::BoxHeadIds ag::box_head(ag::Tape<R>&, ag::ValueId, BoxNetParams<R>&); \
  template ag::ValueId ag::box_loss(ag::Tape<R>&, const ag::BoxHeadIds&,             \
                                    const BoxPrediction<R>&);

BIDRN_INSTANTIATE_BOXNET(float)
BIDRN_INSTANTIATE_BOXNET(double)

}  // namespace bidrn
