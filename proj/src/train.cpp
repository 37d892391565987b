#include "bidrn/train.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "bidrn/errors.hpp"
#include "bidrn/layers.hpp"
#include "bidrn/ops.hpp"
#include "bidrn/optimizer.hpp"

namespace bidrn {

Tensor SyntheticTask::sample_inputs(std::size_t batch, std::mt19937_64& rng) const {
  const Shape s{batch, input_shape.channels, input_shape.height, input_shape.width};
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::normal_distribution<float> noise(0.0f, 0.05f);
  Tensor x(s);
  for (std::size_t n = 0; n < batch; ++n) {
    const float fx = 0.5f * (u(rng) + 1.0f);
    const float fy = 0.5f * (u(rng) + 1.0f);
    const float phase = std::numbers::pi_v<float> * u(rng);
    for (std::size_t c = 0; c < s.channels; ++c) {
      const float offset = u(rng);
      const float amp = 0.5f * (u(rng) + 1.0f);
      for (std::size_t y = 0; y < s.height; ++y)
        for (std::size_t xx = 0; xx < s.width; ++xx) {
          const float wave = std::sin(fx * static_cast<float>(xx) +
                                      fy * static_cast<float>(y) + phase);
          x(n, c, y, xx) = offset + amp * wave + noise(rng);
        }
    }
  }
  return x;
}

Tensor SyntheticTask::targets(const Tensor& inputs) const {
  Tensor h = conv2d_reference(inputs, conv_weight, 2, 1);
  h = global_avg_pool(hardtanh_forward(h));
  Tensor y = conv2d_reference(h, linear_weight, 1, 0);
  const std::size_t k = segments.total();
  for (std::size_t n = 0; n < y.shape().batch; ++n)
    for (std::size_t i = 0; i < k; ++i) {
      float& v = y[n * k + i];
      v = (v - out_mean[i]) * out_scale[i];
    }
  return y;
}

SyntheticTask make_synthetic_task(std::uint64_t seed, const Shape& input_shape,
                                  TaskSegments segments) {
  SyntheticTask task;
  task.segments = segments;
  task.input_shape = input_shape;
  const std::size_t k = segments.total();
  if (k == 0) throw ConfigError("synthetic task needs at least one target");
  // Distinct stream from the student initializer, which also starts at `seed`.
  Initializer init(seed ^ 0x7ea1c4e5d00dULL);
  const std::size_t c = input_shape.channels;
  task.conv_weight =
      init.kaiming_uniform<float>(Shape{task.hidden, c, 3, 3}, c * 9);
  task.linear_weight =
      init.kaiming_uniform<float>(Shape{k, task.hidden, 1, 1}, task.hidden);
  task.out_mean.assign(k, 0.0f);
  task.out_scale.assign(k, 1.0f);

  std::mt19937_64 rng(seed + 1);
  const Tensor calib = task.targets(task.sample_inputs(256, rng));
  for (std::size_t i = 0; i < k; ++i) {
    double sum = 0, sq = 0;
    for (std::size_t n = 0; n < 256; ++n) sum += calib[n * k + i];
    const double mean = sum / 256;
    for (std::size_t n = 0; n < 256; ++n) {
      const double d = calib[n * k + i] - mean;
      sq += d * d;
    }
    const double sd = std::sqrt(sq / 255);
    task.out_mean[i] = static_cast<float>(mean);
    task.out_scale[i] = sd > 1e-12 ? static_cast<float>(1.0 / sd) : 1.0f;
  }
  return task;
}

std::vector<LossRecord> train_toy(Network<float>& net, const TrainOptions& options) {
  std::vector<LossRecord> trace;
  if (options.steps == 0) return trace;
  const TaskSegments seg;
  if (net.config.head_out != seg.total()) {
    throw ConfigError("train-toy needs head_out = " + std::to_string(seg.total()) +
                      ", config has " + std::to_string(net.config.head_out));
  }
  if (options.batch == 0) throw ConfigError("batch size must be >= 1");
  const SyntheticTask task = make_synthetic_task(options.seed, net.config.input_shape);

  std::mt19937_64 sampler(options.seed);
  Tensor frozen_x, frozen_y;
  if (options.frozen_sampler) {
    frozen_x = task.sample_inputs(options.batch, sampler);
    frozen_y = task.targets(frozen_x);
  }

  auto params = net.parameters();
  auto convs = net.binary_convs();
  OptimizerState<float> opt;
  opt.learning_rate = options.learning_rate;

  trace.reserve(options.steps);
  for (std::size_t step = 0; step < options.steps; ++step) {
    Tensor x = frozen_x, y = frozen_y;
    if (!options.frozen_sampler) {
      x = task.sample_inputs(options.batch, sampler);
      y = task.targets(x);
    }
    for (auto* p : params) p->zero_grad();

    ag::Tape<float> t(ag::TapeOptions{true, true, ag::SignMode::Hard, false});
    const ag::ValueId pred = ag::network_forward(t, t.input(x), net);
    const ag::ValueId lp = ag::l1_loss(t, ag::slice_channels(t, pred, 0, seg.param),
                                       slice_channels(y, 0, seg.param));
    const ag::ValueId lj =
        ag::l1_loss(t, ag::slice_channels(t, pred, seg.param, seg.joint),
                    slice_channels(y, seg.param, seg.joint));
    const ag::ValueId lb =
        ag::l1_loss(t, ag::slice_channels(t, pred, seg.param + seg.joint, seg.box),
                    slice_channels(y, seg.param + seg.joint, seg.box));
    const ag::ValueId total = ag::add(t, ag::add(t, lp, lj), lb);

    LossRecord r;
    r.step = step;
    r.param = t.value(lp)[0];
    r.joint = t.value(lj)[0];
    r.box = t.value(lb)[0];
    r.total = t.value(total)[0];
    if (!std::isfinite(r.total)) {
      throw TrainingError(step, "loss became non-finite");
    }
    trace.push_back(r);

    t.backward(total);
    adam_step<float>(params, opt, convs);
  }
  return trace;
}

namespace {
double window_mean(const std::vector<LossRecord>& trace, std::size_t begin,
                   std::size_t end) {
  double s = 0;
  for (std::size_t i = begin; i < end; ++i) s += trace[i].total;
  return end > begin ? s / static_cast<double>(end - begin) : 0.0;
}
}  // namespace

double smoothed_initial(const std::vector<LossRecord>& trace, std::size_t window) {
  return window_mean(trace, 0, std::min(window, trace.size()));
}

double smoothed_final(const std::vector<LossRecord>& trace, std::size_t window) {
  const std::size_t n = trace.size();
  return window_mean(trace, n - std::min(window, n), n);
}

std::string loss_trace_csv(const std::vector<LossRecord>& trace) {
  std::ostringstream out;
  out.precision(9);
  out << "step,loss_total,loss_param,loss_joint,loss_box\n";
  for (const auto& r : trace) {
    out << r.step << ',' << r.total << ',' << r.param << ',' << r.joint << ',' << r.box
        << '\n';
  }
  return out.str();
}

}  // namespace bidrn
