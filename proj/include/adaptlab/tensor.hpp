#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <new>
#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "adaptlab/errors.hpp"

namespace adaptlab {

using Shape = std::vector<std::size_t>;

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1 };

template <typename S>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<S, float> || std::is_same_v<S, double>,
                "tensors hold float or double");
  return std::is_same_v<S, float> ? DType::kF32 : DType::kF64;
}

inline std::size_t num_elements(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape);

// Tensor storage starts on a 64-byte boundary. Vectorized reductions peel
// leading elements by address, so a fixed base alignment is what makes their
// summation order, and hence results, independent of where the heap puts a
// buffer.
inline constexpr std::size_t kTensorAlignment = 64;

template <typename T>
struct AlignedAllocator {
  using value_type = T;

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{kTensorAlignment}));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, std::align_val_t{kTensorAlignment}); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

// Dense row-major n-dimensional array with value semantics. A rank-0 tensor
// (empty shape) holds a single scalar.
template <typename S>
class Tensor {
 public:
  using value_type = S;

  Tensor() : data_(1, S{0}) {}

  explicit Tensor(Shape shape, S fill = S{0})
      : shape_(std::move(shape)), data_(num_elements(shape_), fill) {}

  Tensor(Shape shape, std::vector<S> data)
      : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    if (data_.size() != num_elements(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
    }
  }

  static Tensor scalar(S value) { return Tensor(Shape{}, std::vector<S>{value}); }

  static Tensor from(Shape shape, std::initializer_list<S> values) {
    return Tensor(std::move(shape), std::vector<S>(values));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  std::span<S> data() noexcept { return data_; }
  std::span<const S> data() const noexcept { return data_; }
  AlignedVector<S>& storage() noexcept { return data_; }
  const AlignedVector<S>& storage() const noexcept { return data_; }

  S& operator[](std::size_t i) noexcept { return data_[i]; }
  const S& operator[](std::size_t i) const noexcept { return data_[i]; }

  S& at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
  const S& at(std::initializer_list<std::size_t> index) const {
    return data_[offset(index)];
  }

  S item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
  }

  Tensor reshaped(Shape shape) const {
    if (num_elements(shape) != data_.size()) {
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    Tensor out;
    out.shape_ = std::move(shape);
    out.data_ = data_;
    return out;
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  void fill(S value) { std::fill(data_.begin(), data_.end(), value); }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const {
    if (index.size() != shape_.size()) {
      throw ShapeError("index rank " + std::to_string(index.size()) +
                       " does not match tensor rank " + std::to_string(shape_.size()));
    }
    std::size_t off = 0;
    std::size_t axis = 0;
    for (std::size_t i : index) {
      if (i >= shape_[axis]) throw ShapeError("index out of range on axis " + std::to_string(axis));
      off = off * shape_[axis] + i;
      ++axis;
    }
    return off;
  }

  Shape shape_;
  AlignedVector<S> data_;
};

// Bitwise equality, distinguishing -0.0 from +0.0 and comparing NaN payloads.
template <typename S>
bool bit_identical(const Tensor<S>& a, const Tensor<S>& b);

template <typename S>
bool all_finite(const Tensor<S>& t);

}  // namespace adaptlab
