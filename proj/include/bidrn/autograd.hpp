#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "bidrn/binarize.hpp"
#include "bidrn/ops.hpp"
#include "bidrn/tensor.hpp"

// Reverse-mode differentiation tape. Values are appended in execution order,
// so every node's inputs have smaller ids than its output.
namespace bidrn::ag {

using ValueId = std::size_t;

// Hard: Sign in the forward pass, the piecewise quadratic derivative in the
// backward pass (straight-through). Surrogate: the piecewise quadratic itself
// in the forward pass, which makes the backward pass an exact gradient and
// lets finite differences check every rule.
enum class SignMode { Hard, Surrogate };

struct TapeOptions {
  bool record = true;
  // BatchNorm uses batch statistics and updates running statistics.
  bool training = false;
  SignMode sign_mode = SignMode::Hard;
  // Treat alpha as a constant during backpropagation.
  bool detach_alpha = false;
};

enum class OpTag {
  Input,
  Param,
  Sign,
  Hardtanh,
  Relu,
  Prelu,
  Rprelu,
  Conv2d,
  BinaryConv2d,
  BinaryDeconv2d,
  AvgPool,
  GlobalAvgPool,
  Concat,
  Slice,
  Add,
  Scale,
  BatchNorm,
  Reshape,
  SoftArgmax,
  Exp,
  L1Loss,
};

const char* tag_name(OpTag tag);

template <typename Real>
class Tape {
 public:
  using TensorT = BasicTensor<Real>;

  // Gradient buffers of a node's inputs, allocated on first touch.
  class Grads {
   public:
    Grads(Tape& tape, const std::vector<ValueId>& inputs)
        : tape_(tape), inputs_(inputs) {}
    TensorT& operator[](std::size_t input_index);

   private:
    Tape& tape_;
    const std::vector<ValueId>& inputs_;
  };

  using BackwardFn = std::function<void(const TensorT& grad_out, Grads& grads)>;

  struct Node {
    OpTag tag;
    std::vector<ValueId> inputs;
    ValueId output;
    BackwardFn backward;
  };

  explicit Tape(TapeOptions options = {}) : options_(options) {}

  const TapeOptions& options() const { return options_; }

  ValueId input(TensorT value);
  // Leaf bound to a parameter; backward() adds its gradient into p.grad.
  ValueId param(Parameter<Real>& p);
  ValueId record(OpTag tag, std::vector<ValueId> inputs, TensorT value,
                 BackwardFn backward);

  const TensorT& value(ValueId id) const { return values_.at(id); }
  // Null if no gradient reached this value.
  const TensorT* grad(ValueId id) const;
  std::size_t size() const { return values_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }

  // Seeds d(loss)/d(loss) = 1 and runs every recorded node in reverse.
  // Throws ContractError unless `loss` holds exactly one element.
  void backward(ValueId loss);

 private:
  TensorT& grad_buffer(ValueId id);

  TapeOptions options_;
  std::vector<TensorT> values_;
  std::vector<std::optional<TensorT>> grads_;
  std::vector<Parameter<Real>*> params_;
  std::vector<Node> nodes_;
};

template <typename Real>
ValueId sign(Tape<Real>& t, ValueId x);
template <typename Real>
ValueId hardtanh(Tape<Real>& t, ValueId x);
template <typename Real>
ValueId relu(Tape<Real>& t, ValueId x);
template <typename Real>
ValueId prelu(Tape<Real>& t, ValueId x, Parameter<Real>& slope);
// Per channel: o - gamma + zeta if o > gamma, else beta * (o - gamma) + zeta.
template <typename Real>
ValueId rprelu(Tape<Real>& t, ValueId x, Parameter<Real>& gamma,
               Parameter<Real>& zeta, Parameter<Real>& beta);

template <typename Real>
ValueId conv2d(Tape<Real>& t, ValueId x, Parameter<Real>& weights,
               std::size_t stride, std::size_t padding);
template <typename Real>
ValueId binary_conv2d(Tape<Real>& t, ValueId x, BinaryConv2dParams<Real>& p);
template <typename Real>
ValueId binary_deconv2d(Tape<Real>& t, ValueId x, BinaryConv2dParams<Real>& p,
                        std::size_t out_stride);

template <typename Real>
ValueId avg_pool2d(Tape<Real>& t, ValueId x, std::size_t window,
                   std::size_t stride);
template <typename Real>
ValueId global_avg_pool(Tape<Real>& t, ValueId x);
template <typename Real>
ValueId concat_channels(Tape<Real>& t, ValueId a, ValueId b);
template <typename Real>
ValueId slice_channels(Tape<Real>& t, ValueId x, std::size_t begin,
                       std::size_t count);
template <typename Real>
ValueId add(Tape<Real>& t, ValueId a, ValueId b);
template <typename Real>
ValueId scale(Tape<Real>& t, ValueId x, Real factor);
template <typename Real>
ValueId batch_norm(Tape<Real>& t, ValueId x, BatchNormParams<Real>& p);
template <typename Real>
ValueId reshape(Tape<Real>& t, ValueId x, const Shape& shape);
template <typename Real>
ValueId exp(Tape<Real>& t, ValueId x);
// Mean absolute error against a constant target; ties get zero subgradient.
template <typename Real>
ValueId l1_loss(Tape<Real>& t, ValueId pred, const BasicTensor<Real>& target);

namespace testing {
// Fault injection for gradient-check drills: Sign backward uses the clipped
// identity instead of the quadratic surrogate's derivative.
void set_ste_fault(bool enabled);
bool ste_fault();
}  // namespace testing

}  // namespace bidrn::ag
