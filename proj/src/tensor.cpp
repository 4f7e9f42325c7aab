#include "adaptlab/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstdint>

namespace adaptlab {

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename S>
bool bit_identical(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape()) return false;
  using Bits = std::conditional_t<sizeof(S) == 4, std::uint32_t, std::uint64_t>;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::bit_cast<Bits>(a[i]) != std::bit_cast<Bits>(b[i])) return false;
  }
  return true;
}

template <typename S>
bool all_finite(const Tensor<S>& t) {
  for (S v : t.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template bool bit_identical(const Tensor<float>&, const Tensor<float>&);
template bool bit_identical(const Tensor<double>&, const Tensor<double>&);
template bool all_finite(const Tensor<float>&);
template bool all_finite(const Tensor<double>&);

}  // namespace adaptlab
