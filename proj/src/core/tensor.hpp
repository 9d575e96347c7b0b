#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "core/error.hpp"

namespace engage {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape);

/// Dense row-major array. Feature maps use the (B, C, T, N) axis order so
/// that each (b, c) plane is a contiguous T x N block and temporal shifts are
/// plain offsets of N elements.
template <class Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = Real{0})
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
  Tensor(Shape shape, std::vector<Real> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    require(data_.size() == shape_size(shape_), ErrorCode::kShape,
            "tensor data does not match shape " + shape_string(shape_));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  Real* data() noexcept { return data_.data(); }
  const Real* data() const noexcept { return data_.data(); }
  std::span<Real> values() noexcept { return data_; }
  std::span<const Real> values() const noexcept { return data_; }
  std::vector<Real>& storage() noexcept { return data_; }
  const std::vector<Real>& storage() const noexcept { return data_; }

  Real& operator[](std::size_t i) noexcept { return data_[i]; }
  const Real& operator[](std::size_t i) const noexcept { return data_[i]; }

  void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }
  void reshape(Shape shape) {
    require(shape_size(shape) == data_.size(), ErrorCode::kShape,
            "cannot reshape " + shape_string(shape_) + " to " +
                shape_string(shape));
    shape_ = std::move(shape);
  }

  template <class Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(shape_);
    std::transform(data_.begin(), data_.end(), out.data(),
                   [](Real v) { return static_cast<Other>(v); });
    return out;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<Real> data_;
};

inline void require_shape(const Shape& actual, const Shape& expected,
                          const std::string& what) {
  if (actual != expected) {
    raise(ErrorCode::kShape, what + ": expected " + shape_string(expected) +
                                 ", got " + shape_string(actual));
  }
}

}  // namespace engage
