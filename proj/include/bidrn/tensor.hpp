#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace bidrn {

// Extents of a rank-4 NCHW feature map.
struct Shape {
  std::size_t batch = 1;
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t numel() const { return batch * channels * height * width; }
  std::size_t plane() const { return height * width; }
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

// Throws DimensionError if any extent is zero or the element count overflows.
void validate(const Shape& shape);

// Dense NCHW tensor, row-major within a channel. A default-constructed
// tensor is the 1x1x1x1 zero scalar.
template <typename Real>
class BasicTensor {
 public:
  using value_type = Real;

  BasicTensor() : data_(1, Real{0}) {}
  explicit BasicTensor(const Shape& shape, Real fill = Real{0});
  BasicTensor(const Shape& shape, std::vector<Real> data);

  static BasicTensor scalar(Real value) { return BasicTensor(Shape{}, value); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  std::span<Real> data() { return data_; }
  std::span<const Real> data() const { return data_; }
  const std::vector<Real>& vec() const { return data_; }

  std::size_t index(std::size_t n, std::size_t c, std::size_t y,
                    std::size_t x) const {
    return ((n * shape_.channels + c) * shape_.height + y) * shape_.width + x;
  }
  Real& operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    return data_[index(n, c, y, x)];
  }
  Real operator()(std::size_t n, std::size_t c, std::size_t y,
                  std::size_t x) const {
    return data_[index(n, c, y, x)];
  }
  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  // Same data, new extents with the same element count.
  BasicTensor reshaped(const Shape& shape) const;

  template <typename Other>
  BasicTensor<Other> cast() const {
    std::vector<Other> out(data_.begin(), data_.end());
    return BasicTensor<Other>(shape_, std::move(out));
  }

  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<Real> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

// A tensor that takes part in optimization: latent value plus gradient.
// Non-trainable parameters (BatchNorm running statistics) are carried the
// same way so checkpoints see one uniform list.
template <typename Real>
struct Parameter {
  std::string name;
  BasicTensor<Real> value;
  BasicTensor<Real> grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, BasicTensor<Real> v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()),
        trainable(train) {}

  void zero_grad() { grad = BasicTensor<Real>(value.shape()); }
};

using ParameterF = Parameter<float>;
using ParameterD = Parameter<double>;

}  // namespace bidrn
