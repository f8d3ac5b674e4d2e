// SPDX-License-Identifier: Apache-2.0
#include "rotdcf/tensor.hpp"

#include <cmath>
#include <sstream>

#include "rotdcf/error.hpp"

namespace rotdcf {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_size(shape_))
    throw Error(ErrorKind::Shape, "tensor data size " + std::to_string(data_.size()) +
                                      " does not match shape " + shape_to_string(shape_));
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size())
    throw Error(ErrorKind::Shape, "cannot reshape " + shape_to_string(shape_) + " to " +
                                      shape_to_string(shape));
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) {
  for (auto& x : data_) x = v;
}

void Tensor::scale(double s) {
  for (auto& x : data_) x *= s;
}

void Tensor::axpy(double s, const Tensor& other) {
  if (!same_shape(other))
    throw Error(ErrorKind::Shape, "axpy shape mismatch " + shape_to_string(shape_) + " vs " +
                                      shape_to_string(other.shape_));
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * other.data_[i];
}

bool Tensor::all_finite() const noexcept {
  for (double x : data_)
    if (!std::isfinite(x)) return false;
  return true;
}

double Tensor::max_abs() const noexcept {
  double m = 0.0;
  for (double x : data_) m = std::max(m, std::abs(x));
  return m;
}

double Tensor::sum() const noexcept {
  double s = 0.0;
  for (double x : data_) s += x;
  return s;
}

double rms(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

double l2(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

}  // namespace rotdcf
