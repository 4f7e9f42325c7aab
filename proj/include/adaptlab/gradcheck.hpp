#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace adaptlab {

inline constexpr double kGradcheckEpsilon = 1e-5;
inline constexpr double kGradcheckTolerance = 1e-4;
// Magnitude floor of the relative-error denominator; keeps near-zero
// gradients from turning round-off into large ratios.
inline constexpr double kGradcheckFloor = 1e-3;
inline constexpr std::size_t kGradcheckMinTrials = 20;

// |analytic - numeric| / max(|analytic|, |numeric|, floor)
double gradcheck_relative_error(double analytic, double numeric);

struct GradcheckResult {
  std::string name;
  std::size_t trials = 0;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;

  bool passed() const { return max_rel_error <= kGradcheckTolerance; }
};

// Every checkable op, composite block and adapter variant.
std::vector<std::string> gradcheck_names();

// Compares reverse-mode gradients of every input and trainable parameter with
// 64-bit central differences on randomized tiny shapes. Throws ConfigError
// for unknown names.
GradcheckResult run_gradcheck(std::string_view name, std::size_t trials = kGradcheckMinTrials,
                              std::uint64_t seed = 0);

std::vector<GradcheckResult> run_all_gradchecks(std::size_t trials = kGradcheckMinTrials, std::uint64_t seed = 0);

}  // namespace adaptlab
