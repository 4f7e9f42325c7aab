#pragma once

#include <optional>
#include <string>
#include <vector>

#include "adaptlab/adapter_config.hpp"
#include "adaptlab/encoder_config.hpp"
#include "adaptlab/ops.hpp"
#include "adaptlab/param_spec.hpp"

namespace adaptlab {

enum class Site { kMhsa, kFfn };

// "layers.<l>.adapter_mhsa" / "layers.<l>.adapter_ffn"
std::string adapter_prefix(std::size_t layer, Site site);
// Four attention projections targeted by LoRA.
inline constexpr const char* kAttnProjections[] = {"q", "k", "v", "out"};

// Adapter-owned parameters for every layer and site; trainable by default.
std::vector<ParamSpec> declare_adapter(const EncoderConfig& enc, const AdapterConfig& cfg);

// Marks exactly the in-block bias vectors (attention, FFN, LayerNorm) of the
// backbone trainable and freezes everything else.
template <typename S>
ParamStore<S>& bitfit_mark(ParamStore<S>& params);
bool is_bitfit_parameter(const std::string& name);

// Per-layer adapter parameters resolved against a store. Carrying the layer
// count lets the encoder reject a bank built for a different depth.
template <typename S>
class AdapterBank {
 public:
  AdapterBank(const EncoderConfig& enc, AdapterConfig config, ParamStore<S>& params);

  const AdapterConfig& config() const { return config_; }
  std::size_t num_layers() const { return num_layers_; }
  ParamStore<S>& params() const { return *params_; }
  Parameter<S>& at(const std::string& name) const { return params_->at(name); }

 private:
  AdapterConfig config_;
  ParamStore<S>* params_;
  std::size_t num_layers_;
};

// Graph handles of one MultiConv site.
template <typename S>
struct MultiConvVars {
  ad::Var<S> down;                   // [D, D']
  ad::Var<S> up;                     // [D', D]
  std::vector<ad::Var<S>> convs;     // [D'/N or D', k_i]
  std::optional<ad::Var<S>> mix;     // [D', 3], MixupConv only
  std::optional<ad::Var<S>> alpha;   // [N], WeightedSum only
};

template <typename S>
MultiConvVars<S> bind_multiconv(ad::Graph<S>& g, const AdapterBank<S>& bank, const std::string& prefix);

// Bottleneck with parallel depthwise branches. Input and output are
// [B, T, D]; the caller adds the result into the residual stream.
template <typename S>
ad::Var<S> multiconv_forward(ad::Var<S> a, const MultiConvVars<S>& p, const AdapterConfig& cfg);

// h + depthwise_conv1d(h, w_mix) on [B, D', T].
template <typename S>
ad::Var<S> mixup_fuse(ad::Var<S> h, ad::Var<S> w_mix);

// Runs the branches over h [B, D', T] and combines them per `mode`
// (Concat splits channels across branches; Sum and WeightedSum run every
// branch on all D' channels). Each branch is depthwise conv then GELU.
template <typename S>
ad::Var<S> aggregate(ad::Var<S> h, const std::vector<ad::Var<S>>& convs, Fusion mode,
                     const std::optional<ad::Var<S>>& alpha);

// x @ W (+ bias) + (x @ A) @ B, with the low-rank term added last.
template <typename S>
ad::Var<S> lora_linear(ad::Var<S> x, ad::Var<S> w, const ad::Var<S>* bias, ad::Var<S> a, ad::Var<S> b);

template <typename S>
struct HoulsbyVars {
  ad::Var<S> ln_weight, ln_bias, down_w, down_b, up_w, up_b;
};

template <typename S>
HoulsbyVars<S> bind_houlsby(ad::Graph<S>& g, const AdapterBank<S>& bank, const std::string& prefix);

// LN -> down (+bias) -> GELU -> up (+bias).
template <typename S>
ad::Var<S> houlsby_forward(ad::Var<S> a, const HoulsbyVars<S>& p);

// Concatenates prompts [P, D] in front of h [B, T, D] along time.
template <typename S>
ad::Var<S> prompt_prepend(ad::Var<S> h, ad::Var<S> prompts);

}  // namespace adaptlab
