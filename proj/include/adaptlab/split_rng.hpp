#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <string_view>
#include <vector>

namespace adaptlab {

// Counter-based splittable generator. A stream is identified by a 64-bit key
// derived from (seed, path); child(i) derives a new key without touching the
// parent's state, so the content of a stream never depends on how many values
// were drawn from its ancestors or siblings.
class SplitRng {
 public:
  using result_type = std::uint64_t;

  explicit SplitRng(std::uint64_t seed = 0);

  SplitRng child(std::uint64_t index) const;
  SplitRng child(std::string_view label) const;

  std::uint64_t key() const noexcept { return key_; }
  const std::vector<std::uint64_t>& path() const noexcept { return path_; }

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // UniformRandomBitGenerator surface.
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return next_u64(); }

 private:
  SplitRng(std::uint64_t key, std::vector<std::uint64_t> path);

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::vector<std::uint64_t> path_;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

// Fisher-Yates with this library's own index draws, so the permutation does
// not depend on the standard library implementation.
template <typename T>
void shuffle(std::span<T> items, SplitRng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(items[i - 1], items[j]);
  }
}

std::uint64_t mix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view s);

}  // namespace adaptlab
