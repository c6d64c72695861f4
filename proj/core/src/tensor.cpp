#include "medcore/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "medcore/error.hpp"

namespace medcore {

std::int64_t shape_numel(const Shape& dims) {
  std::int64_t n = 1;
  for (auto d : dims) {
    if (d <= 0) throw ShapeError("tensor dimension must be positive, got shape " + shape_string(dims));
    n *= d;
  }
  return n;
}

std::string shape_string(const Shape& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << ',';
    os << dims[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape dims) : dims_(std::move(dims)), data_(static_cast<std::size_t>(shape_numel(dims_)), 0.0) {}

Tensor::Tensor(Shape dims, std::vector<double> data) : dims_(std::move(dims)), data_(std::move(data)) {
  if (static_cast<std::int64_t>(data_.size()) != shape_numel(dims_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_string(dims_));
  }
}

Tensor Tensor::full(Shape dims, double value) {
  Tensor t(std::move(dims));
  t.fill(value);
  return t;
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor(Shape{static_cast<std::int64_t>(values.size())}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::int64_t rows, std::int64_t cols, std::initializer_list<double> values) {
  return Tensor(Shape{rows, cols}, std::vector<double>(values));
}

std::int64_t Tensor::dim(int axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(dims_));
  }
  return dims_[static_cast<std::size_t>(axis)];
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on non-scalar tensor of shape " + shape_string(dims_));
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor Tensor::reshaped(Shape dims) const {
  if (shape_numel(dims) != static_cast<std::int64_t>(data_.size())) {
    throw ShapeError("reshape: cannot view " + shape_string(dims_) + " as " + shape_string(dims));
  }
  return Tensor(std::move(dims), data_);
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (other.dims_ != dims_) {
    throw ShapeError("tensor +=: shape mismatch " + shape_string(dims_) + " vs " + shape_string(other.dims_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.dims() != b.dims()) {
    throw ShapeError("max_abs_diff: shape mismatch " + shape_string(a.dims()) + " vs " + shape_string(b.dims()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace medcore
