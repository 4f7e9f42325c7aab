#pragma once

#include <optional>
#include <string>
#include <vector>

#include "adaptlab/adapters.hpp"
#include "adaptlab/encoder_config.hpp"
#include "adaptlab/ops.hpp"
#include "adaptlab/param_spec.hpp"

namespace adaptlab {

// Backbone weights (input projection, blocks, final LayerNorm); frozen by
// default.
std::vector<ParamSpec> declare_backbone(const EncoderConfig& cfg);
// Pooled linear classification head "head.weight" [D, 2], "head.bias" [2].
std::vector<ParamSpec> declare_head(const EncoderConfig& cfg);

// Sinusoidal position table [T, D].
template <typename S>
Tensor<S> sinusoidal_positions(std::size_t steps, std::size_t dim);

// Graph handles of one attention block's projections.
template <typename S>
struct AttentionVars {
  ad::Var<S> w[4];
  ad::Var<S> b[4];
  // LoRA factors per projection, when the bank carries them.
  std::optional<ad::Var<S>> lora_a[4];
  std::optional<ad::Var<S>> lora_b[4];
};

template <typename S>
AttentionVars<S> bind_attention(ad::Graph<S>& g, ParamStore<S>& params, std::size_t layer,
                                const AdapterBank<S>* bank);

// Multi-head scaled dot-product self-attention without masking.
template <typename S>
ad::Var<S> mhsa(const AttentionVars<S>& p, ad::Var<S> x, std::size_t num_heads);

// Full encoder over x [B, T, F]; returns [B, T, D]. Prompt tokens, when the
// bank carries them, are dropped from the output.
template <typename S>
ad::Var<S> encoder_forward(const EncoderConfig& cfg, ParamStore<S>& params, ad::Var<S> x,
                           const AdapterBank<S>* adapter);

// Mean over time then affine D -> 2; column 0 is bonafide, column 1 spoof.
template <typename S>
ad::Var<S> classify(ad::Var<S> h, ParamStore<S>& params);

// logit(bonafide) - logit(spoof) for every row of [B, 2] logits.
template <typename S>
std::vector<double> detection_scores(const Tensor<S>& logits);

}  // namespace adaptlab
