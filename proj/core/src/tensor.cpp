#include "gsmt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "gsmt/error.hpp"

namespace gsmt {

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace {
void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
  }
}
}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::span<const double> values) : shape_(std::move(shape)) {
  check_shape(shape_);
  if (shape_product(shape_) != values.size()) {
    throw DimensionError("shape " + shape_string(shape_) + " needs " +
                         std::to_string(shape_product(shape_)) + " values, got " +
                         std::to_string(values.size()));
  }
  data_.assign(values.begin(), values.end());
}

Tensor::Tensor(Shape shape, std::initializer_list<double> values)
    : Tensor(std::move(shape), std::span<const double>(values.begin(), values.size())) {}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  if (rows.size() == 0) throw DimensionError("matrix needs at least one row");
  const std::size_t cols = rows.begin()->size();
  Tensor out({rows.size(), cols});
  std::size_t r = 0;
  for (const auto& row : rows) {
    if (row.size() != cols) throw DimensionError("ragged matrix literal");
    std::copy(row.begin(), row.end(), out.data_.begin() + static_cast<std::ptrdiff_t>(r * cols));
    ++r;
  }
  return out;
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::identity(std::size_t n) {
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

void Tensor::rank_error() const {
  throw DimensionError("expected rank-2 tensor, got " + shape_string(shape_));
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_product(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  Tensor out;
  out.shape_ = std::move(shape);
  out.data_ = data_;
  return out;
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace gsmt
