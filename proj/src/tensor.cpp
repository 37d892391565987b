#include "bidrn/tensor.hpp"

#include <cmath>
#include <limits>

#include "bidrn/errors.hpp"

namespace bidrn {

std::string Shape::str() const {
  return std::to_string(batch) + "x" + std::to_string(channels) + "x" +
         std::to_string(height) + "x" + std::to_string(width);
}

void validate(const Shape& shape) {
  if (shape.batch == 0 || shape.channels == 0 || shape.height == 0 ||
      shape.width == 0) {
    throw DimensionError("shape " + shape.str() + " has a zero extent");
  }
  constexpr auto kMax = std::numeric_limits<std::size_t>::max();
  std::size_t acc = 1;
  for (std::size_t e : {shape.batch, shape.channels, shape.height, shape.width}) {
    if (acc > kMax / e) {
      throw DimensionError("shape " + shape.str() + " overflows size_t");
    }
    acc *= e;
  }
}

template <typename Real>
BasicTensor<Real>::BasicTensor(const Shape& shape, Real fill) : shape_(shape) {
  validate(shape);
  data_.assign(shape.numel(), fill);
}

template <typename Real>
BasicTensor<Real>::BasicTensor(const Shape& shape, std::vector<Real> data)
    : shape_(shape), data_(std::move(data)) {
  validate(shape);
  if (data_.size() != shape.numel()) {
    throw DimensionError("data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape.str());
  }
}

template <typename Real>
BasicTensor<Real> BasicTensor<Real>::reshaped(const Shape& shape) const {
  if (shape.numel() != shape_.numel()) {
    throw DimensionError("cannot reshape " + shape_.str() + " to " +
                         shape.str());
  }
  return BasicTensor(shape, data_);
}

template <typename Real>
bool BasicTensor<Real>::all_finite() const {
  for (Real v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace bidrn
