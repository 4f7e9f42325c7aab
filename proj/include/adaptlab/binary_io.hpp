#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "adaptlab/errors.hpp"

// Little-endian primitives shared by the checkpoint and corpus containers.
namespace adaptlab::binio {

template <typename U>
void put_uint(std::ostream& out, U value) {
  static_assert(std::is_unsigned_v<U>);
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFFu);
  }
  out.write(bytes, sizeof(U));
}

template <typename U>
U get_uint(std::istream& in, const char* what) {
  static_assert(std::is_unsigned_v<U>);
  unsigned char bytes[sizeof(U)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(U));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(U))) {
    throw FormatError(FormatError::Kind::kTruncated,
                      std::string("truncated file while reading ") + what);
  }
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

template <typename F>
void put_float(std::ostream& out, F value) {
  if constexpr (sizeof(F) == 4) {
    put_uint(out, std::bit_cast<std::uint32_t>(value));
  } else {
    put_uint(out, std::bit_cast<std::uint64_t>(value));
  }
}

template <typename F>
F get_float(std::istream& in, const char* what) {
  if constexpr (sizeof(F) == 4) {
    return std::bit_cast<F>(get_uint<std::uint32_t>(in, what));
  } else {
    return std::bit_cast<F>(get_uint<std::uint64_t>(in, what));
  }
}

inline void get_bytes(std::istream& in, char* dst, std::size_t n, const char* what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n)) {
    throw FormatError(FormatError::Kind::kTruncated,
                      std::string("truncated file while reading ") + what);
  }
}

}  // namespace adaptlab::binio
