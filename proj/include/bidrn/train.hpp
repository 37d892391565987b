#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "bidrn/network.hpp"
#include "bidrn/tensor.hpp"

namespace bidrn {

// Target vector layout: [param | joint | box].
struct TaskSegments {
  std::size_t param = 6;
  std::size_t joint = 6;
  std::size_t box = 4;
  std::size_t total() const { return param + joint + box; }
};

// Frozen full-precision teacher: conv3x3 stride 2 -> hardtanh -> global
// average pool -> linear. Outputs are standardized per component with
// statistics measured on a calibration draw, so every target is O(1).
struct SyntheticTask {
  TaskSegments segments;
  Shape input_shape{1, 3, 32, 32};
  std::size_t hidden = 8;
  Tensor conv_weight;
  Tensor linear_weight;
  std::vector<float> out_mean;
  std::vector<float> out_scale;

  // Structured inputs: per-channel offset plus a random plane wave plus noise.
  Tensor sample_inputs(std::size_t batch, std::mt19937_64& rng) const;
  // Standardized teacher outputs, batch x total x 1 x 1.
  Tensor targets(const Tensor& inputs) const;
};

SyntheticTask make_synthetic_task(std::uint64_t seed, const Shape& input_shape = {1, 3, 32, 32},
                                  TaskSegments segments = {});

struct LossRecord {
  std::size_t step = 0;
  double total = 0;
  double param = 0;
  double joint = 0;
  double box = 0;
};

struct TrainOptions {
  std::size_t steps = 500;
  std::uint64_t seed = 7;
  double learning_rate = 5e-4;
  std::size_t batch = 8;
  // Draw one batch and reuse it every step.
  bool frozen_sampler = false;
};

// L = L_param + L_joint + L_box, each a mean L1 against the teacher. BatchNorm
// runs in training mode. Throws TrainingError with the step index on a
// non-finite loss and ConfigError if the head width does not match the task.
std::vector<LossRecord> train_toy(Network<float>& net, const TrainOptions& options);

// Mean total loss over the first / last `window` records.
double smoothed_initial(const std::vector<LossRecord>& trace, std::size_t window = 20);
double smoothed_final(const std::vector<LossRecord>& trace, std::size_t window = 20);

// "step,loss_total,loss_param,loss_joint,loss_box" header plus one line per step.
std::string loss_trace_csv(const std::vector<LossRecord>& trace);

}  // namespace bidrn
