#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lcm/error.hpp"

namespace lcm {

#ifdef LCMKIT_REAL_F64
using Real = double;
#else
using Real = float;
#endif

// Extents of a dense tensor, order <= 4. Rank-4 tensors use the
// batch x channel x height x width layout.
class Shape {
 public:
  static constexpr std::size_t kMaxRank = 4;

  Shape() = default;
  Shape(std::initializer_list<int> dims);
  explicit Shape(std::span<const int> dims);

  std::size_t rank() const { return rank_; }
  int operator[](std::size_t i) const { return dims_[i]; }
  std::size_t numel() const;
  std::vector<int> dims() const { return {dims_.begin(), dims_.begin() + rank_}; }
  std::string str() const;

  friend bool operator==(const Shape& a, const Shape& b) {
    return a.rank_ == b.rank_ && std::equal(a.dims_.begin(), a.dims_.begin() + a.rank_, b.dims_.begin());
  }

 private:
  std::array<int, kMaxRank> dims_{};
  std::size_t rank_ = 0;
};

// Dense row-major tensor. A default-constructed tensor is the null tensor
// (rank 0, no storage); every other tensor has all extents >= 1.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0}) : shape_(shape), data_(shape.numel(), fill) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_.str());
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // Rank-4 accessors.
  int n() const { return shape_[0]; }
  int c() const { return shape_[1]; }
  int h() const { return shape_[2]; }
  int w() const { return shape_[3]; }
  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }
  T& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  const T& at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(Shape shape) const {
    if (shape.numel() != size()) {
      throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
    }
    return Tensor(shape, data_);
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

 private:
  Shape shape_;
  std::vector<T> data_;
};

// A named trainable tensor with its gradient and an optional symmetric box
// [-bound, bound] that projection enforces.
template <typename T>
struct ParamBlock {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  std::optional<T> bound;

  ParamBlock() = default;
  ParamBlock(std::string name_, Tensor<T> value_, std::optional<T> bound_ = std::nullopt)
      : name(std::move(name_)), value(std::move(value_)), grad(value.shape()), bound(bound_) {}

  std::size_t size() const { return value.size(); }
  void zero_grad() { grad = Tensor<T>(value.shape()); }

  // Plain SGD step followed by box projection.
  void sgd_step(T lr);
  void project();
};

// Rank-4 helper: throws ShapeError unless t is rank 4.
void require_rank4(const Shape& s, const char* what);

}  // namespace lcm
