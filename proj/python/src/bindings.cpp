#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "bidrn/binarize.hpp"
#include "bidrn/boxnet.hpp"
#include "bidrn/config.hpp"
#include "bidrn/errors.hpp"
#include "bidrn/network.hpp"
#include "bidrn/ops.hpp"
#include "bidrn/parallel.hpp"
#include "bidrn/stats.hpp"
#include "bidrn/train.hpp"

namespace py = pybind11;
using namespace bidrn;

namespace {

using F32 = py::array_t<float, py::array::c_style | py::array::forcecast>;

// Arrays of rank 1..4 are right-aligned into N x C x H x W.
Tensor to_tensor(const F32& a) {
  if (a.ndim() < 1 || a.ndim() > 4) throw py::value_error("expected a 1-4 dimensional array");
  std::size_t ext[4] = {1, 1, 1, 1};
  for (py::ssize_t i = 0; i < a.ndim(); ++i)
    ext[4 - a.ndim() + i] = static_cast<std::size_t>(a.shape(i));
  const float* p = a.data();
  return Tensor(Shape{ext[0], ext[1], ext[2], ext[3]}, std::vector<float>(p, p + a.size()));
}

py::array_t<float> to_array(const Tensor& t, py::ssize_t ndim = 4) {
  const Shape& s = t.shape();
  const std::size_t full[4] = {s.batch, s.channels, s.height, s.width};
  std::vector<py::ssize_t> shape(full + 4 - ndim, full + 4);
  py::array_t<float> out(shape);
  std::copy(t.vec().begin(), t.vec().end(), out.mutable_data());
  return out;
}

py::array_t<float> elementwise(const F32& a, Tensor (*fn)(const Tensor&)) {
  return to_array(fn(to_tensor(a)), a.ndim());
}

NetworkConfig config_from(const std::string& preset_or_json) {
  const auto names = preset_names();
  if (std::find(names.begin(), names.end(), preset_or_json) != names.end())
    return preset_config(preset_or_json);
  return parse_config(preset_or_json);
}

}  // namespace

PYBIND11_MODULE(_bidrn, m) {
  m.doc() = "1-bit convolution kernels, binarized residual blocks and op counting";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);

  m.def("sign", [](const F32& x) { return elementwise(x, &sign_forward<float>); });
  m.def("ste_grad", [](const F32& x) { return elementwise(x, &ste_grad<float>); });
  m.def("hardtanh", [](const F32& x) { return elementwise(x, &hardtanh_forward<float>); });

  m.def(
      "conv2d_reference",
      [](const F32& x, const F32& w, std::size_t stride, std::size_t padding) {
        return to_array(conv2d_reference(to_tensor(x), to_tensor(w), stride, padding));
      },
      py::arg("x"), py::arg("w"), py::arg("stride") = 1, py::arg("padding") = 0);

  m.def(
      "binary_conv2d",
      [](const F32& x, const F32& w, std::size_t stride, std::size_t padding) {
        BinaryConv2dParams<float> p("weight", to_tensor(w), stride, padding);
        Tensor y = binary_conv2d(to_tensor(x), p);
        return py::make_tuple(to_array(y), p.alpha);
      },
      py::arg("x"), py::arg("w"), py::arg("stride") = 1, py::arg("padding") = 0,
      "Returns (output, per-channel alpha).");

  m.def("pack_signs", [](const F32& rows) {
    if (rows.ndim() != 2) throw py::value_error("expected a 2-d array");
    const auto r = static_cast<std::size_t>(rows.shape(0));
    const auto len = static_cast<std::size_t>(rows.shape(1));
    PackedBits b = pack_signs<float>(std::span<const float>(rows.data(), rows.size()), r, len);
    py::array_t<std::uint64_t> words({static_cast<py::ssize_t>(r),
                                      static_cast<py::ssize_t>(b.words_per_row)});
    std::copy(b.words.begin(), b.words.end(), words.mutable_data());
    return words;
  });

  m.def("xnor_dot", [](const F32& a, const F32& w) {
    if (a.ndim() != 1 || w.ndim() != 1) throw py::value_error("expected 1-d arrays");
    PackedBits pa = pack_signs<float>(std::span<const float>(a.data(), a.size()), 1, a.size());
    PackedBits pw = pack_signs<float>(std::span<const float>(w.data(), w.size()), 1, w.size());
    return xnor_popcount_dot(pa, 0, pw, 0);
  });

  m.def(
      "soft_argmax",
      [](const F32& values, std::size_t joints, std::size_t depth) {
        Heatmap h{joints, depth, to_tensor(values)};
        const Tensor xyz = soft_argmax(h);
        return to_array(xyz.reshaped(Shape{1, xyz.shape().batch, joints, 3}), 3);
      },
      py::arg("values"), py::arg("joints"), py::arg("depth") = 1,
      "values: N x (J*D) x H x W. Returns N x J x 3 expected (x, y, z).");

  m.def("preset_names", &preset_names);
  m.def("preset_config", [](const std::string& name) {
    return serialize_config(preset_config(name));
  });

  m.def(
      "model_stats",
      [](const std::string& config) {
        auto j = nlohmann::ordered_json::parse(stats_json(model_stats(config_from(config))));
        py::dict d;
        for (auto& [k, v] : j.items()) {
          if (v.is_number_unsigned())
            d[py::str(k)] = v.get<std::uint64_t>();
          else
            d[py::str(k)] = v.get<double>();
        }
        return d;
      },
      py::arg("config"), "Preset name or JSON config text.");

  m.def(
      "train_toy",
      [](std::size_t steps, std::uint64_t seed, double lr, const std::string& config) {
        auto net = build_network<float>(config_from(config));
        TrainOptions o;
        o.steps = steps;
        o.seed = seed;
        o.learning_rate = lr;
        std::vector<LossRecord> trace;
        {
          py::gil_scoped_release release;
          trace = train_toy(net, o);
        }
        py::list out;
        for (const auto& r : trace) {
          py::dict d;
          d["step"] = r.step;
          d["total"] = r.total;
          d["param"] = r.param;
          d["joint"] = r.joint;
          d["box"] = r.box;
          out.append(d);
        }
        return out;
      },
      py::arg("steps") = 500, py::arg("seed") = 7, py::arg("lr") = TrainOptions{}.learning_rate,
      py::arg("config") = "full-bidrb");

  m.def("set_max_threads", &set_max_threads);
}
