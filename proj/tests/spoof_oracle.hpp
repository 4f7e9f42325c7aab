#pragma once

// Hand-coded detectors over the synthetic corpus, independent of the model.

#include <algorithm>
#include <cmath>
#include <vector>

#include "adaptlab/eer.hpp"
#include "adaptlab/spoofbench.hpp"

namespace adaptlab::testing {

inline constexpr std::size_t kOracleWindow = 20;

// Feature-averaged frame track divided by its own mean, which cancels the
// per-record level.
inline std::vector<double> normalized_frame_track(const SpoofRecord& r) {
  const std::size_t T = r.features.extent(0), F = r.features.extent(1);
  std::vector<double> m(T, 0.0);
  double mu = 0;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t f = 0; f < F; ++f) m[t] += r.features[t * F + f];
    m[t] /= static_cast<double>(F);
    mu += m[t] / static_cast<double>(T);
  }
  for (auto& v : m) v /= mu;
  return m;
}

inline double max_abs_first_difference(const std::vector<double>& m) {
  double mx = 0;
  for (std::size_t t = 1; t < m.size(); ++t) mx = std::max(mx, std::abs(m[t] - m[t - 1]));
  return mx;
}

inline double moving_average_variance(const std::vector<double>& m, std::size_t w) {
  std::vector<double> a;
  for (std::size_t t = 0; t + w <= m.size(); ++t) {
    double s = 0;
    for (std::size_t j = 0; j < w; ++j) s += m[t + j];
    a.push_back(s / static_cast<double>(w));
  }
  double mu = 0, var = 0;
  for (double v : a) mu += v / static_cast<double>(a.size());
  for (double v : a) var += (v - mu) * (v - mu) / static_cast<double>(a.size());
  return var;
}

inline double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
  return v[v.size() / 2];
}

// Each statistic is scaled by its corpus-wide median (no labels used); the
// record's spoof evidence is the larger of the two, with the variance taken
// back to amplitude scale.
inline double oracle_eer(const Corpus& c) {
  std::vector<double> a, b;
  for (const auto& r : c.records) {
    const auto m = normalized_frame_track(r);
    a.push_back(max_abs_first_difference(m));
    b.push_back(moving_average_variance(m, kOracleWindow));
  }
  const double ma = median(a), mb = median(b);
  ScoreSet s;
  for (std::size_t i = 0; i < c.records.size(); ++i) {
    s.push_back({c.records[i].label, -std::max(a[i] / ma, std::sqrt(b[i] / mb))});
  }
  return compute_eer(s).eer_percent;
}

// Training error of a logistic regression fit to standardized per-feature
// frame means; zero would mean the classes are linearly separable there.
inline double best_linear_error_on_frame_means(const Corpus& c) {
  const std::size_t n = c.records.size(), F = c.num_features, T = c.num_frames;
  std::vector<std::vector<double>> x(n, std::vector<double>(F, 0.0));
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = c.records[i].label == Label::kSpoof ? 1.0 : 0.0;
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t f = 0; f < F; ++f) x[i][f] += c.records[i].features[t * F + f] / static_cast<double>(T);
  }
  for (std::size_t f = 0; f < F; ++f) {
    double mu = 0, sd = 0;
    for (std::size_t i = 0; i < n; ++i) mu += x[i][f] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) sd += (x[i][f] - mu) * (x[i][f] - mu) / static_cast<double>(n);
    sd = std::sqrt(sd) + 1e-12;
    for (std::size_t i = 0; i < n; ++i) x[i][f] = (x[i][f] - mu) / sd;
  }
  std::vector<double> w(F + 1, 0.0);
  for (int it = 0; it < 3000; ++it) {
    std::vector<double> g(F + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double z = w[F];
      for (std::size_t f = 0; f < F; ++f) z += w[f] * x[i][f];
      const double err = 1.0 / (1.0 + std::exp(-z)) - y[i];
      for (std::size_t f = 0; f < F; ++f) g[f] += err * x[i][f];
      g[F] += err;
    }
    for (std::size_t f = 0; f <= F; ++f) w[f] -= 0.5 * g[f] / static_cast<double>(n);
  }
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double z = w[F];
    for (std::size_t f = 0; f < F; ++f) z += w[f] * x[i][f];
    wrong += (z > 0) != (y[i] > 0.5);
  }
  return static_cast<double>(wrong) / static_cast<double>(n);
}

}  // namespace adaptlab::testing
