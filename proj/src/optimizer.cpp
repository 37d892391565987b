#include "bidrn/optimizer.hpp"

#include <cmath>

#include "bidrn/errors.hpp"

namespace bidrn {

template <typename Real>
void adam_step(std::span<Parameter<Real>* const> params, OptimizerState<Real>& state,
               std::span<BinaryConv2dParams<Real>* const> refresh) {
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
  }
  if (state.m.size() != params.size()) {
    throw DimensionError("optimizer holds " + std::to_string(state.m.size()) +
                         " moment slots for " + std::to_string(params.size()) +
                         " parameters");
  }
  state.step += 1;
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter<Real>& p = *params[k];
    if (!p.trainable) continue;
    if (!(p.grad.shape() == p.value.shape()) || !(state.m[k].shape() == p.value.shape())) {
      throw DimensionError("adam: parameter " + p.name + " has shape " +
                           p.value.shape().str() + ", gradient " + p.grad.shape().str() +
                           ", moments " + state.m[k].shape().str());
    }
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      const double mi = b1 * m[i] + (1.0 - b1) * g;
      const double vi = b2 * v[i] + (1.0 - b2) * g * g;
      m[i] = static_cast<Real>(mi);
      v[i] = static_cast<Real>(vi);
      const double update =
          state.learning_rate * (mi / c1) / (std::sqrt(vi / c2) + state.epsilon);
      p.value[i] = static_cast<Real>(p.value[i] - update);
    }
  }
  for (auto* c : refresh) refresh_alpha(*c);
}

template void adam_step(std::span<Parameter<float>* const>, OptimizerState<float>&,
                        std::span<BinaryConv2dParams<float>* const>);
template void adam_step(std::span<Parameter<double>* const>, OptimizerState<double>&,
                        std::span<BinaryConv2dParams<double>* const>);

}  // namespace bidrn
