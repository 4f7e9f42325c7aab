#include "adaptlab/split_rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace adaptlab {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

SplitRng::SplitRng(std::uint64_t seed) : key_(mix64(seed + kGolden)) {}

SplitRng::SplitRng(std::uint64_t key, std::vector<std::uint64_t> path)
    : key_(key), path_(std::move(path)) {}

SplitRng SplitRng::child(std::uint64_t index) const {
  auto path = path_;
  path.push_back(index);
  return SplitRng(mix64(key_ ^ mix64(index * kGolden + 0x632BE59BD9B4E019ULL)), std::move(path));
}

SplitRng SplitRng::child(std::string_view label) const { return child(fnv1a64(label)); }

std::uint64_t SplitRng::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double SplitRng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::int64_t SplitRng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<std::int64_t>(next_u64());
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % span;
  std::uint64_t r;
  do {
    r = next_u64();
  } while (r >= limit);
  return lo + static_cast<std::int64_t>(r % span);
}

// Box-Muller; pairs are cached so every other call is free.
double SplitRng::normal() {
  if (has_spare_normal_) {
    has_spare_normal_ = false;
    return spare_normal_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_normal_ = radius * std::sin(angle);
  has_spare_normal_ = true;
  return radius * std::cos(angle);
}

}  // namespace adaptlab
