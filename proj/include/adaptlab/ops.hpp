#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "adaptlab/graph.hpp"

// Differentiable tensor ops. Every op appends one node per output to the
// graph owning its inputs. Broadcasting is supported only by add/sub/mul,
// where the smaller operand's shape must be a suffix of the larger one
// (a rank-0 tensor is a suffix of every shape).
namespace adaptlab::ad {

template <typename S> Var<S> add(Var<S> a, Var<S> b);
template <typename S> Var<S> sub(Var<S> a, Var<S> b);
template <typename S> Var<S> mul(Var<S> a, Var<S> b);
template <typename S> Var<S> scale(Var<S> a, S factor);

// a[..., M, K] x b[..., K, N]. Batch extents must match, or one operand must
// be a plain matrix that is broadcast over the other's batch.
template <typename S> Var<S> matmul(Var<S> a, Var<S> b);

// Swaps two axes.
template <typename S> Var<S> transpose(Var<S> a, std::size_t axis0, std::size_t axis1);
template <typename S> Var<S> reshape(Var<S> a, Shape shape);

template <typename S> Var<S> concat(const std::vector<Var<S>>& parts, std::size_t axis);
template <typename S> Var<S> narrow(Var<S> a, std::size_t axis, std::size_t start, std::size_t length);
template <typename S>
std::vector<Var<S>> split(Var<S> a, std::size_t axis, std::span<const std::size_t> sizes);

// Over the last axis.
template <typename S> Var<S> softmax(Var<S> a);
template <typename S> Var<S> log_softmax(Var<S> a);

// Exact (erf-based) GELU.
template <typename S> Var<S> gelu(Var<S> a);

// Normalizes over the last axis with biased variance, then applies the
// elementwise affine gamma/beta (both shaped [last extent]).
template <typename S>
Var<S> layer_norm(Var<S> x, Var<S> gamma, Var<S> beta, S eps = S(1e-5));

// Mean over one axis; the axis is removed from the shape.
template <typename S> Var<S> mean(Var<S> a, std::size_t axis);
// Sum of all elements as a rank-0 tensor.
template <typename S> Var<S> sum(Var<S> a);

// Mean negative log-likelihood of log-probabilities [B, C] at integer labels.
template <typename S> Var<S> nll_loss(Var<S> log_probs, std::span<const int> labels);
template <typename S> Var<S> cross_entropy(Var<S> logits, std::span<const int> labels);

// x[B, C, T] filtered per channel by w[C, k] (k odd), zero "same" padding of
// (k - 1) / 2 on both ends: y[b,c,t] = sum_j x[b,c,t+j-(k-1)/2] * w[c,j].
template <typename S> Var<S> depthwise_conv1d(Var<S> x, Var<S> w);

// Multi-head scaled dot-product self-attention core without projections:
// q, k, v [B, T, D] are read as H heads of D / H adjacent channels; head h of
// the output is softmax(q_h k_h^T / sqrt(D / H)) v_h, written back in place.
template <typename S> Var<S> attention(Var<S> q, Var<S> k, Var<S> v, std::size_t num_heads);
// x @ w + b with b optional (pass nullptr).
template <typename S> Var<S> linear(Var<S> x, Var<S> w, const Var<S>* b);

}  // namespace adaptlab::ad
