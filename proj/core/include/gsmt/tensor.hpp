#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "gsmt/buffer_stats.hpp"

namespace gsmt {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_product(const Shape& shape);

// Dense row-major array of doubles. Storage goes through the tracking
// allocator so buffer_stats() sees every tensor allocation.
class Tensor {
 public:
  using Storage = std::vector<double, TrackingAllocator<double>>;

  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::span<const double> values);
  Tensor(Shape shape, std::initializer_list<double> values);

  // 2-D tensor from nested rows; all rows must have equal length.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor scalar(double value);
  static Tensor identity(std::size_t n);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  // Row/column view for rank-2 tensors. A rank-1 tensor of length n reads as
  // a 1 x n row.
  std::size_t rows() const {
    if (shape_.size() == 1) return 1;
    if (shape_.size() != 2) rank_error();
    return shape_[0];
  }
  std::size_t cols() const {
    if (shape_.size() == 1) return shape_[0];
    if (shape_.size() != 2) rank_error();
    return shape_[1];
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> row(std::size_t r) { return std::span<double>(data_).subspan(r * cols(), cols()); }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols(), cols());
  }

  // Same data under a new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  [[noreturn]] void rank_error() const;

  Shape shape_;
  Storage data_;
};

}  // namespace gsmt
