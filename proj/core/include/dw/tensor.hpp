#pragma once

#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "dw/error.hpp"

namespace dw {

using Shape = std::vector<int>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t acc, int d) { return acc * static_cast<std::size_t>(d); });
}

std::string shape_str(const Shape& shape);

/// Dense row-major float64 array. All numerics in the library run in double so
/// finite-difference checks and determinism tests see the same arithmetic as training.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)), data_(numel(shape_), fill) {}
  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    DW_REQUIRE(data_.size() == numel(shape_), ErrorCode::kInvalidInput,
               "tensor data size does not match shape " + shape_str(shape_));
  }

  const Shape& shape() const { return shape_; }
  int dim(int i) const { return shape_[i < 0 ? shape_.size() + i : i]; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // NCHW accessors.
  double& at(int n, int c, int y, int x) { return data_[offset4(n, c, y, x)]; }
  double at(int n, int c, int y, int x) const { return data_[offset4(n, c, y, x)]; }

  Tensor reshaped(Shape shape) const {
    DW_REQUIRE(numel(shape) == data_.size(), ErrorCode::kInvalidGeometry,
               "cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), data_);
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

 private:
  std::size_t offset4(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x;
  }

  Shape shape_;
  std::vector<double> data_;
};

}  // namespace dw
