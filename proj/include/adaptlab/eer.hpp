#pragma once

#include <cstddef>
#include <vector>

namespace adaptlab {

enum class Label : int { kBonafide = 0, kSpoof = 1 };

struct ScoredTrial {
  Label label;
  // Higher means more likely bonafide.
  double score;
};

using ScoreSet = std::vector<ScoredTrial>;

struct EvalResult {
  double eer_percent = 0.0;
  double threshold_at_eer = 0.0;
  std::size_t num_bonafide = 0;
  std::size_t num_spoof = 0;
};

// Equal error rate with thresholds swept over the sorted unique scores plus
// a threshold below all of them. At threshold t a bonafide trial is rejected
// when score <= t and a spoof trial is accepted when score > t. The EER is
// read at the first threshold where FAR - FRR turns non-positive, linearly
// interpolated from the preceding operating point when the sign change is
// strict. Throws std::invalid_argument when either class is absent.
EvalResult compute_eer(const ScoreSet& scores);

}  // namespace adaptlab
