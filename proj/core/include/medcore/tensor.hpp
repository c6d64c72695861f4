#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace medcore {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& dims);
std::string shape_string(const Shape& dims);

/// Dense row-major tensor of 64-bit floats. A rank-0 tensor holds one value.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape dims);
  Tensor(Shape dims, std::vector<double> data);

  static Tensor zeros(Shape dims) { return Tensor(std::move(dims)); }
  static Tensor full(Shape dims, double value);
  static Tensor scalar(double value);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor matrix(std::int64_t rows, std::int64_t cols, std::initializer_list<double> values);

  const Shape& dims() const noexcept { return dims_; }
  int rank() const noexcept { return static_cast<int>(dims_.size()); }
  std::int64_t dim(int axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::int64_t r, std::int64_t c) { return data_[static_cast<std::size_t>(r * dims_.back() + c)]; }
  double at(std::int64_t r, std::int64_t c) const {
    return data_[static_cast<std::size_t>(r * dims_.back() + c)];
  }

  /// Value of a single-element tensor.
  double item() const;

  bool all_finite() const noexcept;
  void fill(double value);
  Tensor reshaped(Shape dims) const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double s);

  friend bool operator==(const Tensor& a, const Tensor& b) { return a.dims_ == b.dims_ && a.data_ == b.data_; }

 private:
  Shape dims_;
  std::vector<double> data_;
};

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace medcore
