#include "adaptlab/ops.hpp"

#include <Eigen/Core>
#include <unsupported/Eigen/SpecialFunctions>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace adaptlab::ad {

namespace {

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using ConstMap = Eigen::Map<const RowMat<S>>;
template <typename S>
using MutMap = Eigen::Map<RowMat<S>>;
template <typename S>
using ConstStrided = Eigen::Map<const RowMat<S>, 0, Eigen::OuterStride<>>;
template <typename S>
using MutStrided = Eigen::Map<RowMat<S>, 0, Eigen::OuterStride<>>;
template <typename S>
using ConstArr = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;
template <typename S>
using MutArr = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;

template <typename S>
Graph<S>& graph_of(Var<S> v) {
  if (!v.graph) throw GraphError("op applied to an unbound variable");
  v.graph->check(v);
  return *v.graph;
}

template <typename S>
void same_graph(Var<S> a, Var<S> b) {
  if (a.graph != b.graph) throw GraphError("op inputs belong to different graphs");
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

void add_into(std::span<double> dst, std::span<const double> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}
void add_into(std::span<float> dst, std::span<const float> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

enum class Binary { kAdd, kSub, kMul };

template <typename S>
Var<S> binary(Var<S> a, Var<S> b, Binary kind) {
  same_graph(a, b);
  auto& g = graph_of(a);
  const auto& av = g.value(a);
  const auto& bv = g.value(b);
  // `big` provides the output shape; `small` repeats over its trailing block.
  const bool swap = av.size() < bv.size() || (!is_suffix(bv.shape(), av.shape()) &&
                                              is_suffix(av.shape(), bv.shape()));
  const auto& big = swap ? bv : av;
  const auto& small = swap ? av : bv;
  if (!is_suffix(small.shape(), big.shape())) {
    throw ShapeError("cannot broadcast " + shape_str(av.shape()) + " with " +
                     shape_str(bv.shape()) + ": smaller shape must be a suffix");
  }
  const std::size_t inner = small.size();
  const std::size_t outer = big.size() / inner;
  Tensor<S> out(big.shape());
  const S* pb = big.data().data();
  const S* ps = small.data().data();
  S* po = out.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    const S* rb = pb + o * inner;
    S* ro = po + o * inner;
    switch (kind) {
      case Binary::kAdd:
        for (std::size_t i = 0; i < inner; ++i) ro[i] = rb[i] + ps[i];
        break;
      case Binary::kSub:
        if (swap) {
          for (std::size_t i = 0; i < inner; ++i) ro[i] = ps[i] - rb[i];
        } else {
          for (std::size_t i = 0; i < inner; ++i) ro[i] = rb[i] - ps[i];
        }
        break;
      case Binary::kMul:
        for (std::size_t i = 0; i < inner; ++i) ro[i] = rb[i] * ps[i];
        break;
    }
  }
  const std::uint32_t ia = a.id, ib = b.id;
  const OpKind op = kind == Binary::kAdd ? OpKind::kAdd : kind == Binary::kSub ? OpKind::kSub : OpKind::kMul;
  return g.record(op, {a, b}, std::move(out),
                  [ia, ib, kind, swap, inner, outer](Graph<S>& gr, const Tensor<S>& gout) {
                    const std::uint32_t i_big = swap ? ib : ia;
                    const std::uint32_t i_small = swap ? ia : ib;
                    // Sign applied to the gradient of each operand.
                    const S sign_a = S{1};
                    const S sign_b = kind == Binary::kSub ? S{-1} : S{1};
                    const S sign_big = swap ? sign_b : sign_a;
                    const S sign_small = swap ? sign_a : sign_b;
                    const S* pg = gout.data().data();
                    if (Tensor<S>* gbig = gr.grad_slot(i_big)) {
                      S* d = gbig->data().data();
                      if (kind == Binary::kMul) {
                        const S* ps = gr.value(i_small).data().data();
                        for (std::size_t o = 0; o < outer; ++o)
                          for (std::size_t i = 0; i < inner; ++i) d[o * inner + i] += pg[o * inner + i] * ps[i];
                      } else {
                        for (std::size_t k = 0; k < outer * inner; ++k) d[k] += sign_big * pg[k];
                      }
                    }
                    if (Tensor<S>* gsmall = gr.grad_slot(i_small)) {
                      S* d = gsmall->data().data();
                      if (kind == Binary::kMul) {
                        const S* pb = gr.value(i_big).data().data();
                        for (std::size_t o = 0; o < outer; ++o)
                          for (std::size_t i = 0; i < inner; ++i) d[i] += pg[o * inner + i] * pb[o * inner + i];
                      } else {
                        for (std::size_t o = 0; o < outer; ++o)
                          for (std::size_t i = 0; i < inner; ++i) d[i] += sign_small * pg[o * inner + i];
                      }
                    }
                  });
}

// Splits a shape around two axes into [pre, n0, mid, n1, post].
struct SwapDims {
  std::size_t pre = 1, n0 = 1, mid = 1, n1 = 1, post = 1;
};

SwapDims swap_dims(const Shape& s, std::size_t a0, std::size_t a1) {
  SwapDims d;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i < a0) d.pre *= s[i];
    else if (i == a0) d.n0 = s[i];
    else if (i < a1) d.mid *= s[i];
    else if (i == a1) d.n1 = s[i];
    else d.post *= s[i];
  }
  return d;
}

// out[pre, n1, mid, n0, post] (+)= in[pre, n0, mid, n1, post]
template <typename S>
void swap_copy(const S* in, S* out, const SwapDims& d, bool accumulate) {
  for (std::size_t p = 0; p < d.pre; ++p)
    for (std::size_t i = 0; i < d.n0; ++i)
      for (std::size_t m = 0; m < d.mid; ++m)
        for (std::size_t j = 0; j < d.n1; ++j) {
          const S* src = in + (((p * d.n0 + i) * d.mid + m) * d.n1 + j) * d.post;
          S* dst = out + (((p * d.n1 + j) * d.mid + m) * d.n0 + i) * d.post;
          if (accumulate) {
            for (std::size_t q = 0; q < d.post; ++q) dst[q] += src[q];
          } else {
            std::copy(src, src + d.post, dst);
          }
        }
}

// [outer, axis, inner] decomposition.
struct AxisDims {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisDims axis_dims(const Shape& s, std::size_t axis) {
  AxisDims d;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i < axis) d.outer *= s[i];
    else if (i == axis) d.n = s[i];
    else d.inner *= s[i];
  }
  return d;
}

template <typename S>
constexpr S kInvSqrt2 = S(std::numbers::sqrt2 / 2);
template <typename S>
constexpr S kInvSqrt2Pi = S(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);

}  // namespace

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  return binary(a, b, Binary::kAdd);
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  return binary(a, b, Binary::kSub);
}

template <typename S>
Var<S> mul(Var<S> a, Var<S> b) {
  return binary(a, b, Binary::kMul);
}

template <typename S>
Var<S> scale(Var<S> a, S factor) {
  auto& g = graph_of(a);
  Tensor<S> out = g.value(a);
  for (auto& v : out.data()) v *= factor;
  const auto ia = a.id;
  return g.record(OpKind::kScale, {a}, std::move(out), [ia, factor](Graph<S>& gr, const Tensor<S>& gout) {
    if (Tensor<S>* d = gr.grad_slot(ia)) {
      auto dst = d->data();
      auto src = gout.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * src[i];
    }
  });
}

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
  same_graph(a, b);
  auto& g = graph_of(a);
  const auto& av = g.value(a);
  const auto& bv = g.value(b);
  if (av.rank() < 2 || bv.rank() < 2) {
    throw ShapeError("matmul needs rank >= 2 operands, got " + shape_str(av.shape()) + " and " +
                     shape_str(bv.shape()));
  }
  const std::size_t m = av.extent(av.rank() - 2);
  const std::size_t k = av.extent(av.rank() - 1);
  const std::size_t kb = bv.extent(bv.rank() - 2);
  const std::size_t n = bv.extent(bv.rank() - 1);
  if (k != kb) {
    throw ShapeError("matmul inner dimension mismatch: " + shape_str(av.shape()) + " x " +
                     shape_str(bv.shape()) + " (" + std::to_string(k) + " vs " + std::to_string(kb) + ")");
  }
  const Shape a_batch(av.shape().begin(), av.shape().end() - 2);
  const Shape b_batch(bv.shape().begin(), bv.shape().end() - 2);
  // Modes: 0 = b broadcast (a rows flattened), 1 = a broadcast, 2 = matched batches.
  int mode;
  Shape out_shape;
  if (b_batch.empty()) {
    mode = 0;
    out_shape = a_batch;
  } else if (a_batch.empty()) {
    mode = 1;
    out_shape = b_batch;
  } else if (a_batch == b_batch) {
    mode = 2;
    out_shape = a_batch;
  } else {
    throw ShapeError("matmul batch extents not broadcastable: " + shape_str(av.shape()) + " x " +
                     shape_str(bv.shape()));
  }
  const std::size_t batch = num_elements(out_shape);
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor<S> out(out_shape);
  const S* pa = av.data().data();
  const S* pb = bv.data().data();
  S* pc = out.data().data();
  if (mode == 0) {
    MutMap<S>(pc, batch * m, n).noalias() = ConstMap<S>(pa, batch * m, k) * ConstMap<S>(pb, k, n);
  } else {
    for (std::size_t i = 0; i < batch; ++i) {
      const S* ai = mode == 1 ? pa : pa + i * m * k;
      MutMap<S>(pc + i * m * n, m, n).noalias() = ConstMap<S>(ai, m, k) * ConstMap<S>(pb + i * k * n, k, n);
    }
  }
  const auto ia = a.id, ib = b.id;
  return g.record(OpKind::kMatmul, {a, b}, std::move(out),
                  [ia, ib, mode, batch, m, k, n](Graph<S>& gr, const Tensor<S>& gout) {
                    const S* pg = gout.data().data();
                    Tensor<S>* ga = gr.grad_slot(ia);
                    Tensor<S>* gb = gr.grad_slot(ib);
                    const S* pa = gr.value(ia).data().data();
                    const S* pb = gr.value(ib).data().data();
                    if (mode == 0) {
                      if (ga) {
                        MutMap<S>(ga->data().data(), batch * m, k).noalias() +=
                            ConstMap<S>(pg, batch * m, n) * ConstMap<S>(pb, k, n).transpose();
                      }
                      if (gb) {
                        MutMap<S>(gb->data().data(), k, n).noalias() +=
                            ConstMap<S>(pa, batch * m, k).transpose() * ConstMap<S>(pg, batch * m, n);
                      }
                      return;
                    }
                    for (std::size_t i = 0; i < batch; ++i) {
                      const std::size_t a_off = mode == 1 ? 0 : i * m * k;
                      const S* gi = pg + i * m * n;
                      if (ga) {
                        MutMap<S>(ga->data().data() + a_off, m, k).noalias() +=
                            ConstMap<S>(gi, m, n) * ConstMap<S>(pb + i * k * n, k, n).transpose();
                      }
                      if (gb) {
                        MutMap<S>(gb->data().data() + i * k * n, k, n).noalias() +=
                            ConstMap<S>(pa + a_off, m, k).transpose() * ConstMap<S>(gi, m, n);
                      }
                    }
                  });
}

template <typename S>
Var<S> transpose(Var<S> a, std::size_t axis0, std::size_t axis1) {
  auto& g = graph_of(a);
  const auto& av = g.value(a);
  if (axis0 >= av.rank() || axis1 >= av.rank()) {
    throw ShapeError("transpose axes out of range for shape " + shape_str(av.shape()));
  }
  if (axis0 > axis1) std::swap(axis0, axis1);
  Shape out_shape = av.shape();
  std::swap(out_shape[axis0], out_shape[axis1]);
  Tensor<S> out(out_shape);
  const SwapDims d = swap_dims(av.shape(), axis0, axis1);
  if (axis0 == axis1) {
    out = av;
  } else {
    swap_copy(av.data().data(), out.data().data(), d, false);
  }
  const auto ia = a.id;
  const bool identity = axis0 == axis1;
  return g.record(OpKind::kTranspose, {a}, std::move(out), [ia, d, identity](Graph<S>& gr, const Tensor<S>& gout) {
    Tensor<S>* ga = gr.grad_slot(ia);
    if (!ga) return;
    if (identity) {
      add_into(ga->data(), gout.data());
      return;
    }
    // The gradient has the output layout [pre, n1, mid, n0, post].
    SwapDims back{d.pre, d.n1, d.mid, d.n0, d.post};
    swap_copy(gout.data().data(), ga->data().data(), back, true);
  });
}

template <typename S>
Var<S> reshape(Var<S> a, Shape shape) {
  auto& g = graph_of(a);
  Tensor<S> out = g.value(a).reshaped(std::move(shape));
  const auto ia = a.id;
  return g.record(OpKind::kReshape, {a}, std::move(out), [ia](Graph<S>& gr, const Tensor<S>& gout) {
    if (Tensor<S>* ga = gr.grad_slot(ia)) add_into(ga->data(), gout.data());
  });
}

template <typename S>
Var<S> concat(const std::vector<Var<S>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  auto& g = graph_of(parts.front());
  const Shape& ref = g.value(parts.front()).shape();
  if (axis >= ref.size()) throw ShapeError("concat axis out of range for shape " + shape_str(ref));
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    same_graph(p, parts.front());
    const Shape& s = g.value(p).shape();
    bool compatible = s.size() == ref.size();
    for (std::size_t i = 0; compatible && i < s.size(); ++i) {
      if (i != axis && s[i] != ref[i]) compatible = false;
    }
    if (!compatible) {
      throw ShapeError("concat shape mismatch: " + shape_str(s) + " vs " + shape_str(ref) +
                       " on axis " + std::to_string(axis));
    }
    widths.push_back(s[axis]);
    total += s[axis];
  }
  Shape out_shape = ref;
  out_shape[axis] = total;
  Tensor<S> out(out_shape);
  const AxisDims od = axis_dims(out_shape, axis);
  std::size_t offset = 0;
  std::vector<std::uint32_t> ids;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const S* src = g.value(parts[p]).data().data();
    const std::size_t block = widths[p] * od.inner;
    for (std::size_t o = 0; o < od.outer; ++o) {
      std::copy(src + o * block, src + (o + 1) * block, out.data().data() + (o * od.n + offset) * od.inner);
    }
    offset += widths[p];
    ids.push_back(parts[p].id);
  }
  return g.record(OpKind::kConcat, parts, std::move(out),
                  [ids, widths, od](Graph<S>& gr, const Tensor<S>& gout) {
                    std::size_t off = 0;
                    for (std::size_t p = 0; p < ids.size(); ++p) {
                      if (Tensor<S>* gp = gr.grad_slot(ids[p])) {
                        const std::size_t block = widths[p] * od.inner;
                        for (std::size_t o = 0; o < od.outer; ++o) {
                          const S* src = gout.data().data() + (o * od.n + off) * od.inner;
                          S* dst = gp->data().data() + o * block;
                          for (std::size_t q = 0; q < block; ++q) dst[q] += src[q];
                        }
                      }
                      off += widths[p];
                    }
                  });
}

template <typename S>
Var<S> narrow(Var<S> a, std::size_t axis, std::size_t start, std::size_t length) {
  auto& g = graph_of(a);
  const auto& av = g.value(a);
  if (axis >= av.rank() || start + length > av.extent(axis)) {
    throw ShapeError("narrow [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") out of range for axis " + std::to_string(axis) + " of " + shape_str(av.shape()));
  }
  Shape out_shape = av.shape();
  out_shape[axis] = length;
  Tensor<S> out(out_shape);
  const AxisDims d = axis_dims(av.shape(), axis);
  const std::size_t block = length * d.inner;
  for (std::size_t o = 0; o < d.outer; ++o) {
    const S* src = av.data().data() + (o * d.n + start) * d.inner;
    std::copy(src, src + block, out.data().data() + o * block);
  }
  const auto ia = a.id;
  return g.record(OpKind::kNarrow, {a}, std::move(out),
                  [ia, d, start, block](Graph<S>& gr, const Tensor<S>& gout) {
                    Tensor<S>* ga = gr.grad_slot(ia);
                    if (!ga) return;
                    for (std::size_t o = 0; o < d.outer; ++o) {
                      const S* src = gout.data().data() + o * block;
                      S* dst = ga->data().data() + (o * d.n + start) * d.inner;
                      for (std::size_t q = 0; q < block; ++q) dst[q] += src[q];
                    }
                  });
}

template <typename S>
std::vector<Var<S>> split(Var<S> a, std::size_t axis, std::span<const std::size_t> sizes) {
  const auto& av = graph_of(a).value(a);
  if (axis >= av.rank()) throw ShapeError("split axis out of range for shape " + shape_str(av.shape()));
  std::size_t total = 0;
  for (auto s : sizes) total += s;
  if (total != av.extent(axis)) {
    throw ShapeError("split sizes sum to " + std::to_string(total) + " but axis " + std::to_string(axis) +
                     " has extent " + std::to_string(av.extent(axis)));
  }
  std::vector<Var<S>> out;
  std::size_t start = 0;
  for (auto s : sizes) {
    out.push_back(narrow(a, axis, start, s));
    start += s;
  }
  return out;
}

template <typename S>
Var<S> softmax(Var<S> a) {
  auto& g = graph_of(a);
  const auto& av = g.value(a);
  if (av.rank() == 0) throw ShapeError("softmax of a scalar");
  const std::size_t n = av.extent(av.rank() - 1);
  const std::size_t rows = av.size() / n;
  Tensor<S> out(av.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    ConstArr<S> x(av.data().data() + r * n, static_cast<Eigen::Index>(n));
    MutArr<S> y(out.data().data() + r * n, static_cast<Eigen::Index>(n));
    y = (x - x.maxCoeff()).exp();
    y *= S(1) / y.sum();
  }
  const auto ia = a.id;
  const auto self = static_cast<std::uint32_t>(g.num_nodes());
  return g.record(OpKind::kSoftmax, {a}, std::move(out), [ia, self, n, rows](Graph<S>& gr, const Tensor<S>& gout) {
    Tensor<S>* ga = gr.grad_slot(ia);
    if (!ga) return;
    const S* y = gr.value(self).data().data();
    const S* dy = gout.data().data();
    S* dx = ga->data().data();
    const auto len = static_cast<Eigen::Index>(n);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t off = r * n;
      ConstArr<S> yr(y + off, len), dyr(dy + off, len);
      MutArr<S> dxr(dx + off, len);
      dxr += yr * (dyr - (dyr * yr).sum());
    }
  });
}

template <typename S>
Var<S> log_softmax(Var<S> a) {
  auto& g = graph_of(a);
  const auto& av = g.value(a);
  if (av.rank() == 0) throw ShapeError("log_softmax of a scalar");
  const std::size_t n = av.extent(av.rank() - 1);
  const std::size_t rows = av.size() / n;
  Tensor<S> out(av.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const S* x = av.data().data() + r * n;
    S* y = out.data().data() + r * n;
    const S mx = *std::max_element(x, x + n);
    const S lse = mx + std::log((ConstArr<S>(x, static_cast<Eigen::Index>(n)) - mx).exp().sum());
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] - lse;
  }
  const auto ia = a.id;
  const auto self = static_cast<std::uint32_t>(g.num_nodes());
  return g.record(OpKind::kLogSoftmax, {a}, std::move(out), [ia, self, n, rows](Graph<S>& gr, const Tensor<S>& gout) {
    Tensor<S>* ga = gr.grad_slot(ia);
    if (!ga) return;
    const S* y = gr.value(self).data().data();
    const S* dy = gout.data().data();
    S* dx = ga->data().data();
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t off = r * n;
      S total = 0;
      for (std::size_t i = 0; i < n; ++i) total += dy[off + i];
      for (std::size_t i = 0; i < n; ++i) dx[off + i] += dy[off + i] - std::exp(y[off + i]) * total;
    }
  });
}

template <typename S>
Var<S> gelu(Var<S> a) {
  auto& g = graph_of(a);
  const auto& av = g.value(a);
  Tensor<S> out(av.shape());
  const auto len = static_cast<Eigen::Index>(av.size());
  {
    ConstArr<S> x(av.data().data(), len);
    MutArr<S>(out.data().data(), len) = S(0.5) * x * (S(1) + (x * kInvSqrt2<S>).erf());
  }
  const auto ia = a.id;
  return g.record(OpKind::kGelu, {a}, std::move(out), [ia, len](Graph<S>& gr, const Tensor<S>& gout) {
    Tensor<S>* ga = gr.grad_slot(ia);
    if (!ga) return;
    ConstArr<S> x(gr.value(ia).data().data(), len);
    ConstArr<S> dy(gout.data().data(), len);
    const auto cdf = S(0.5) * (S(1) + (x * kInvSqrt2<S>).erf());
    const auto pdf = (S(-0.5) * x.square()).exp() * kInvSqrt2Pi<S>;
    MutArr<S>(ga->data().data(), len) += dy * (cdf + x * pdf);
  });
}

template <typename S>
Var<S> layer_norm(Var<S> x, Var<S> gamma, Var<S> beta, S eps) {
  same_graph(x, gamma);
  same_graph(x, beta);
  auto& g = graph_of(x);
  const auto& xv = g.value(x);
  if (xv.rank() == 0) throw ShapeError("layer_norm of a scalar");
  const std::size_t n = xv.extent(xv.rank() - 1);
  const Shape affine{n};
  if (g.value(gamma).shape() != affine || g.value(beta).shape() != affine) {
    throw ShapeError("layer_norm affine parameters must have shape " + shape_str(affine));
  }
  const std::size_t rows = xv.size() / n;
  const S* gm = g.value(gamma).data().data();
  const S* bt = g.value(beta).data().data();
  Tensor<S> out(xv.shape());
  std::vector<S> xhat(xv.size());
  std::vector<S> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const S* xr = xv.data().data() + r * n;
    S mu = 0;
    for (std::size_t i = 0; i < n; ++i) mu += xr[i];
    mu /= static_cast<S>(n);
    S var = 0;
    for (std::size_t i = 0; i < n; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= static_cast<S>(n);
    const S inv = S(1) / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t i = 0; i < n; ++i) {
      const S h = (xr[i] - mu) * inv;
      xhat[r * n + i] = h;
      out[r * n + i] = h * gm[i] + bt[i];
    }
  }
  const auto ix = x.id, ig = gamma.id, ib = beta.id;
  return g.record(OpKind::kLayerNorm, {x, gamma, beta}, std::move(out),
                  [ix, ig, ib, n, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                      Graph<S>& gr, const Tensor<S>& gout) {
                    const S* dy = gout.data().data();
                    if (Tensor<S>* gb = gr.grad_slot(ib)) {
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t i = 0; i < n; ++i) (*gb)[i] += dy[r * n + i];
                    }
                    if (Tensor<S>* gg = gr.grad_slot(ig)) {
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t i = 0; i < n; ++i) (*gg)[i] += dy[r * n + i] * xhat[r * n + i];
                    }
                    if (Tensor<S>* gx = gr.grad_slot(ix)) {
                      const S* gm = gr.value(ig).data().data();
                      std::vector<S> dxhat(n);
                      for (std::size_t r = 0; r < rows; ++r) {
                        S sum_d = 0, sum_dh = 0;
                        for (std::size_t i = 0; i < n; ++i) {
                          dxhat[i] = dy[r * n + i] * gm[i];
                          sum_d += dxhat[i];
                          sum_dh += dxhat[i] * xhat[r * n + i];
                        }
                        const S k = inv_std[r] / static_cast<S>(n);
                        for (std::size_t i = 0; i < n; ++i) {
                          (*gx)[r * n + i] +=
                              k * (static_cast<S>(n) * dxhat[i] - sum_d - xhat[r * n + i] * sum_dh);
                        }
                      }
                    }
                  });
}

template <typename S>
Var<S> mean(Var<S> a, std::size_t axis) {
  auto& g = graph_of(a);
  const auto& av = g.value(a);
  if (axis >= av.rank()) throw ShapeError("mean axis out of range for shape " + shape_str(av.shape()));
  const AxisDims d = axis_dims(av.shape(), axis);
  Shape out_shape = av.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor<S> out(out_shape);
  const S inv = S(1) / static_cast<S>(d.n);
  for (std::size_t o = 0; o < d.outer; ++o) {
    S* dst = out.data().data() + o * d.inner;
    for (std::size_t j = 0; j < d.n; ++j) {
      const S* src = av.data().data() + (o * d.n + j) * d.inner;
      for (std::size_t q = 0; q < d.inner; ++q) dst[q] += src[q];
    }
    for (std::size_t q = 0; q < d.inner; ++q) dst[q] *= inv;
  }
  const auto ia = a.id;
  return g.record(OpKind::kMean, {a}, std::move(out), [ia, d, inv](Graph<S>& gr, const Tensor<S>& gout) {
    Tensor<S>* ga = gr.grad_slot(ia);
    if (!ga) return;
    for (std::size_t o = 0; o < d.outer; ++o) {
      const S* src = gout.data().data() + o * d.inner;
      for (std::size_t j = 0; j < d.n; ++j) {
        S* dst = ga->data().data() + (o * d.n + j) * d.inner;
        for (std::size_t q = 0; q < d.inner; ++q) dst[q] += src[q] * inv;
      }
    }
  });
}

template <typename S>
Var<S> sum(Var<S> a) {
  auto& g = graph_of(a);
  S total = 0;
  for (S v : g.value(a).data()) total += v;
  const auto ia = a.id;
  return g.record(OpKind::kSum, {a}, Tensor<S>::scalar(total), [ia](Graph<S>& gr, const Tensor<S>& gout) {
    if (Tensor<S>* ga = gr.grad_slot(ia)) {
      const S gval = gout[0];
      for (auto& v : ga->data()) v += gval;
    }
  });
}

template <typename S>
Var<S> nll_loss(Var<S> log_probs, std::span<const int> labels) {
  auto& g = graph_of(log_probs);
  const auto& lp = g.value(log_probs);
  if (lp.rank() != 2 || lp.extent(0) != labels.size()) {
    throw ShapeError("nll_loss expects [B, C] log-probabilities matching " +
                     std::to_string(labels.size()) + " labels, got " + shape_str(lp.shape()));
  }
  const std::size_t batch = lp.extent(0);
  const std::size_t classes = lp.extent(1);
  std::vector<int> lab(labels.begin(), labels.end());
  S total = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    if (lab[b] < 0 || static_cast<std::size_t>(lab[b]) >= classes) {
      throw ShapeError("label " + std::to_string(lab[b]) + " out of range for " + std::to_string(classes) + " classes");
    }
    total -= lp[b * classes + static_cast<std::size_t>(lab[b])];
  }
  const S inv = S(1) / static_cast<S>(batch);
  const auto ia = log_probs.id;
  return g.record(OpKind::kNll, {log_probs}, Tensor<S>::scalar(total * inv),
                  [ia, lab = std::move(lab), classes, inv](Graph<S>& gr, const Tensor<S>& gout) {
                    Tensor<S>* ga = gr.grad_slot(ia);
                    if (!ga) return;
                    for (std::size_t b = 0; b < lab.size(); ++b) {
                      (*ga)[b * classes + static_cast<std::size_t>(lab[b])] -= gout[0] * inv;
                    }
                  });
}

template <typename S>
Var<S> cross_entropy(Var<S> logits, std::span<const int> labels) {
  return nll_loss(log_softmax(logits), labels);
}

template <typename S>
Var<S> depthwise_conv1d(Var<S> x, Var<S> w) {
  same_graph(x, w);
  auto& g = graph_of(x);
  const auto& xv = g.value(x);
  const auto& wv = g.value(w);
  if (xv.rank() != 3 || wv.rank() != 2 || wv.extent(0) != xv.extent(1)) {
    throw ShapeError("depthwise_conv1d expects x[B,C,T] and w[C,k], got " + shape_str(xv.shape()) +
                     " and " + shape_str(wv.shape()));
  }
  const std::size_t k = wv.extent(1);
  if (k % 2 == 0) throw ShapeError("depthwise_conv1d kernel size must be odd, got " + std::to_string(k));
  const std::size_t batch = xv.extent(0), channels = xv.extent(1), steps = xv.extent(2);
  const auto pad = static_cast<std::ptrdiff_t>((k - 1) / 2);
  const auto len = static_cast<std::ptrdiff_t>(steps);
  Tensor<S> out(xv.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const S* xs = xv.data().data() + (b * channels + c) * steps;
      const S* ws = wv.data().data() + c * k;
      S* ys = out.data().data() + (b * channels + c) * steps;
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
        const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
        const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(len, len - shift);
        const S wj = ws[j];
        for (std::ptrdiff_t t = t0; t < t1; ++t) ys[t] += xs[t + shift] * wj;
      }
    }
  }
  const auto ix = x.id, iw = w.id;
  return g.record(OpKind::kDepthwiseConv1d, {x, w}, std::move(out),
                  [ix, iw, batch, channels, steps, k, pad, len](Graph<S>& gr, const Tensor<S>& gout) {
                    Tensor<S>* gx = gr.grad_slot(ix);
                    Tensor<S>* gw = gr.grad_slot(iw);
                    const S* xv = gr.value(ix).data().data();
                    const S* wv = gr.value(iw).data().data();
                    for (std::size_t b = 0; b < batch; ++b) {
                      for (std::size_t c = 0; c < channels; ++c) {
                        const std::size_t row = (b * channels + c) * steps;
                        const S* dy = gout.data().data() + row;
                        for (std::size_t j = 0; j < k; ++j) {
                          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
                          const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
                          const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(len, len - shift);
                          if (gx) {
                            S* dx = gx->data().data() + row;
                            const S wj = wv[c * k + j];
                            for (std::ptrdiff_t t = t0; t < t1; ++t) dx[t + shift] += dy[t] * wj;
                          }
                          if (gw) {
                            const S* xs = xv + row;
                            S acc = 0;
                            for (std::ptrdiff_t t = t0; t < t1; ++t) acc += dy[t] * xs[t + shift];
                            (*gw)[c * k + j] += acc;
                          }
                        }
                      }
                    }
                  });
}

template <typename S>
Var<S> attention(Var<S> q, Var<S> k, Var<S> v, std::size_t num_heads) {
  same_graph(q, k);
  same_graph(q, v);
  auto& g = graph_of(q);
  const auto& qv = g.value(q);
  if (qv.rank() != 3 || g.value(k).shape() != qv.shape() || g.value(v).shape() != qv.shape()) {
    throw ShapeError("attention expects q, k, v of one shape [B,T,D], got " + shape_str(qv.shape()) + ", " +
                     shape_str(g.value(k).shape()) + ", " + shape_str(g.value(v).shape()));
  }
  const std::size_t B = qv.extent(0), T = qv.extent(1), D = qv.extent(2);
  if (num_heads == 0 || D % num_heads != 0) {
    throw ShapeError("attention width " + std::to_string(D) + " is not divisible into " +
                     std::to_string(num_heads) + " heads");
  }
  const std::size_t H = num_heads, dh = D / H;
  const S scale_factor = S(1) / std::sqrt(static_cast<S>(dh));
  const auto t = static_cast<Eigen::Index>(T), d = static_cast<Eigen::Index>(dh);
  const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(D));

  Tensor<S> out(qv.shape());
  AlignedVector<S> probs(B * H * T * T);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < H; ++h) {
      const std::size_t off = b * T * D + h * dh;
      MutMap<S> p(probs.data() + (b * H + h) * T * T, t, t);
      p.noalias() = ConstStrided<S>(qv.data().data() + off, t, d, stride) *
                    ConstStrided<S>(g.value(k).data().data() + off, t, d, stride).transpose();
      for (Eigen::Index r = 0; r < t; ++r) {
        MutArr<S> row(p.data() + r * t, t);
        row = ((row - row.maxCoeff()) * scale_factor).exp();
        row *= S(1) / row.sum();
      }
      MutStrided<S>(out.data().data() + off, t, d, stride).noalias() =
          p * ConstStrided<S>(g.value(v).data().data() + off, t, d, stride);
    }
  }
  const auto iq = q.id, ik = k.id, iv = v.id;
  return g.record(
      OpKind::kAttention, {q, k, v}, std::move(out),
      [iq, ik, iv, B, H, T, D, dh, scale_factor, probs = std::move(probs)](Graph<S>& gr, const Tensor<S>& gout) {
        Tensor<S>* gq = gr.grad_slot(iq);
        Tensor<S>* gk = gr.grad_slot(ik);
        Tensor<S>* gv = gr.grad_slot(iv);
        const auto t = static_cast<Eigen::Index>(T), d = static_cast<Eigen::Index>(dh);
        const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(D));
        RowMat<S> dp(t, t);
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t h = 0; h < H; ++h) {
            const std::size_t off = b * T * D + h * dh;
            ConstMap<S> p(probs.data() + (b * H + h) * T * T, t, t);
            ConstStrided<S> dout(gout.data().data() + off, t, d, stride);
            if (gv) MutStrided<S>(gv->data().data() + off, t, d, stride).noalias() += p.transpose() * dout;
            if (!gq && !gk) continue;
            dp.noalias() = dout * ConstStrided<S>(gr.value(iv).data().data() + off, t, d, stride).transpose();
            // Softmax backward; the score scale is folded in here.
            for (Eigen::Index r = 0; r < t; ++r) {
              ConstArr<S> pr(p.data() + r * t, t);
              MutArr<S> dr(dp.data() + r * t, t);
              dr = pr * (dr - (dr * pr).sum()) * scale_factor;
            }
            if (gq) {
              MutStrided<S>(gq->data().data() + off, t, d, stride).noalias() +=
                  dp * ConstStrided<S>(gr.value(ik).data().data() + off, t, d, stride);
            }
            if (gk) {
              MutStrided<S>(gk->data().data() + off, t, d, stride).noalias() +=
                  dp.transpose() * ConstStrided<S>(gr.value(iq).data().data() + off, t, d, stride);
            }
          }
        }
      });
}

template <typename S>
Var<S> linear(Var<S> x, Var<S> w, const Var<S>* b) {
  Var<S> y = matmul(x, w);
  return b ? add(y, *b) : y;
}

#define ADAPTLAB_INSTANTIATE(S)                                                              \
  template Var<S> add(Var<S>, Var<S>);                                                       \
  template Var<S> sub(Var<S>, Var<S>);                                                       \
  template Var<S> mul(Var<S>, Var<S>);                                                       \
  template Var<S> scale(Var<S>, S);                                                          \
  template Var<S> matmul(Var<S>, Var<S>);                                                    \
  template Var<S> transpose(Var<S>, std::size_t, std::size_t);                               \
  template Var<S> reshape(Var<S>, Shape);                                                    \
  template Var<S> concat(const std::vector<Var<S>>&, std::size_t);                           \
  template Var<S> narrow(Var<S>, std::size_t, std::size_t, std::size_t);                     \
  template std::vector<Var<S>> split(Var<S>, std::size_t, std::span<const std::size_t>);     \
  template Var<S> softmax(Var<S>);                                                           \
  template Var<S> log_softmax(Var<S>);                                                       \
  template Var<S> gelu(Var<S>);                                                              \
  template Var<S> layer_norm(Var<S>, Var<S>, Var<S>, S);                                     \
  template Var<S> mean(Var<S>, std::size_t);                                                 \
  template Var<S> sum(Var<S>);                                                               \
  template Var<S> nll_loss(Var<S>, std::span<const int>);                                    \
  template Var<S> cross_entropy(Var<S>, std::span<const int>);                               \
  template Var<S> depthwise_conv1d(Var<S>, Var<S>);                                          \
  template Var<S> attention(Var<S>, Var<S>, Var<S>, std::size_t);                            \
  template Var<S> linear(Var<S>, Var<S>, const Var<S>*);

ADAPTLAB_INSTANTIATE(float)
ADAPTLAB_INSTANTIATE(double)
#undef ADAPTLAB_INSTANTIATE

}  // namespace adaptlab::ad
