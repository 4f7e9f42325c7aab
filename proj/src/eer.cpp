#include "adaptlab/eer.hpp"

#include <algorithm>
#include <stdexcept>

namespace adaptlab {

EvalResult compute_eer(const ScoreSet& scores) {
  std::vector<double> bona, spoof;
  for (const auto& s : scores) (s.label == Label::kBonafide ? bona : spoof).push_back(s.score);
  if (bona.empty() || spoof.empty()) {
    throw std::invalid_argument("undefined EER: need at least one bonafide and one spoof score");
  }
  std::sort(bona.begin(), bona.end());
  std::sort(spoof.begin(), spoof.end());
  std::vector<double> thresholds;
  thresholds.reserve(scores.size());
  std::merge(bona.begin(), bona.end(), spoof.begin(), spoof.end(), std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const double nb = static_cast<double>(bona.size());
  const double ns = static_cast<double>(spoof.size());
  EvalResult result{0.0, 0.0, bona.size(), spoof.size()};

  // Operating point below every score: nothing rejected, everything accepted.
  double prev_frr = 0.0, prev_far = 1.0;
  double prev_t = thresholds.front();
  std::size_t ib = 0, is = 0;
  for (double t : thresholds) {
    while (ib < bona.size() && bona[ib] <= t) ++ib;
    while (is < spoof.size() && spoof[is] <= t) ++is;
    const double frr = static_cast<double>(ib) / nb;
    const double far = static_cast<double>(spoof.size() - is) / ns;
    const double diff = far - frr;
    if (diff <= 0.0) {
      if (diff == 0.0) {
        result.eer_percent = 100.0 * frr;
        result.threshold_at_eer = t;
      } else {
        const double prev_diff = prev_far - prev_frr;
        const double lambda = prev_diff / (prev_diff - diff);
        result.eer_percent = 100.0 * (prev_frr + lambda * (frr - prev_frr));
        result.threshold_at_eer = prev_t + lambda * (t - prev_t);
      }
      return result;
    }
    prev_frr = frr;
    prev_far = far;
    prev_t = t;
  }
  // Unreachable: at the largest threshold FRR = 1 and FAR = 0.
  throw std::logic_error("EER sweep did not cross");
}

}  // namespace adaptlab
