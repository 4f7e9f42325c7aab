#pragma once

// Independent reference implementations used as oracles by the unit tests.
// Each is a direct loop over the defining formula with no shared code paths
// with the library kernels.

#include <cmath>
#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "adaptlab/eer.hpp"
#include "adaptlab/param_store.hpp"
#include "adaptlab/split_rng.hpp"
#include "adaptlab/tensor.hpp"

namespace adaptlab::testing {

template <typename S = double>
Tensor<S> randn(SplitRng& r, Shape shape, double sd = 1.0) {
  Tensor<S> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<S>(sd * r.normal());
  return t;
}

// a [M, K] x b [K, N]
inline std::vector<double> triple_loop_matmul(const Tensor<double>& a, const Tensor<double>& b) {
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

// y[b,c,t] = sum_j x[b,c,t+j-(k-1)/2] w[c,j] with zeros outside [0, T).
inline std::vector<double> direct_conv(const Tensor<double>& x, const Tensor<double>& w) {
  const std::size_t B = x.extent(0), C = x.extent(1), T = x.extent(2), k = w.extent(1);
  const long half = static_cast<long>(k - 1) / 2;
  std::vector<double> y(B * C * T, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < k; ++j) {
          const long src = static_cast<long>(t) + static_cast<long>(j) - half;
          if (src < 0 || src >= static_cast<long>(T)) continue;
          y[(b * C + c) * T + t] += x[(b * C + c) * T + static_cast<std::size_t>(src)] * w[c * k + j];
        }
  return y;
}

// Exhaustive sweep: every candidate threshold is scored by recounting all
// trials, and the crossing is interpolated between the bracketing points.
inline double brute_force_eer(const ScoreSet& s) {
  std::vector<double> cands;
  for (const auto& x : s) cands.push_back(x.score);
  std::sort(cands.begin(), cands.end());
  cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
  double nb = 0, ns = 0;
  for (const auto& x : s) (x.label == Label::kBonafide ? nb : ns) += 1;
  auto rates = [&](double t, double& frr, double& far) {
    double rej = 0, acc = 0;
    for (const auto& x : s) {
      if (x.label == Label::kBonafide && x.score <= t) rej += 1;
      if (x.label == Label::kSpoof && x.score > t) acc += 1;
    }
    frr = rej / nb;
    far = acc / ns;
  };
  double pfrr = 0.0, pfar = 1.0;
  for (double t : cands) {
    double frr, far;
    rates(t, frr, far);
    if (far - frr <= 0) {
      if (far == frr) return 100.0 * frr;
      const double dp = pfar - pfrr, dc = far - frr;
      const double lam = dp / (dp - dc);
      return 100.0 * (pfrr + lam * (frr - pfrr));
    }
    pfrr = frr;
    pfar = far;
  }
  return -1.0;
}

// Layer-0 attention of `p`: softmax(q k^T / sqrt(dh)) v per head with explicit loops, then the output
// projection.
inline Tensor<double> per_head_mhsa(const Tensor<double>& x, const ParamStore<double>& p, std::size_t heads) {
  const std::size_t Tn = x.extent(1), D = x.extent(2), dh = D / heads;
  auto proj = [&](const std::string& n, const Tensor<double>& in) {
    const auto& w = p.at("layers.0.attn." + n + ".weight").value;
    const auto& b = p.at("layers.0.attn." + n + ".bias").value;
    Tensor<double> out({Tn, D});
    for (std::size_t t = 0; t < Tn; ++t)
      for (std::size_t o = 0; o < D; ++o) {
        double s = b[o];
        for (std::size_t i = 0; i < D; ++i) s += in[t * D + i] * w[i * D + o];
        out[t * D + o] = s;
      }
    return out;
  };
  const Tensor<double> q = proj("q", x), k = proj("k", x), v = proj("v", x);
  Tensor<double> ctx({Tn, D});
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < Tn; ++i) {
      std::vector<double> s(Tn);
      double mx = -1e300;
      for (std::size_t j = 0; j < Tn; ++j) {
        double dot = 0;
        for (std::size_t c = 0; c < dh; ++c) dot += q[i * D + h * dh + c] * k[j * D + h * dh + c];
        s[j] = dot / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, s[j]);
      }
      double z = 0;
      for (auto& e : s) z += (e = std::exp(e - mx));
      for (std::size_t c = 0; c < dh; ++c) {
        double acc = 0;
        for (std::size_t j = 0; j < Tn; ++j) acc += s[j] / z * v[j * D + h * dh + c];
        ctx[i * D + h * dh + c] = acc;
      }
    }
  }
  return proj("out", ctx);
}

}  // namespace adaptlab::testing
