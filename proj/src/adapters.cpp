#include "adaptlab/adapters.hpp"

#include <cmath>

namespace adaptlab {

using ad::Var;

std::string adapter_prefix(std::size_t layer, Site site) {
  return "layers." + std::to_string(layer) + (site == Site::kMhsa ? ".adapter_mhsa" : ".adapter_ffn");
}

namespace {

std::vector<std::size_t> branch_widths(const AdapterConfig& cfg) {
  const bool split = cfg.fusion == Fusion::kConcat || cfg.fusion == Fusion::kMixupConv;
  const std::size_t n = cfg.kernels.size();
  if (n == 0) return {};
  return std::vector<std::size_t>(n, split ? cfg.bottleneck / n : cfg.bottleneck);
}

void declare_multiconv_site(std::vector<ParamSpec>& out, const EncoderConfig& enc, const AdapterConfig& cfg,
                            const std::string& prefix) {
  const std::size_t d = enc.model_dim, b = cfg.bottleneck;
  out.push_back({prefix + ".down", {d, b}, Init::xavier(d, b), true, false});
  const auto widths = branch_widths(cfg);
  for (std::size_t i = 0; i < cfg.kernels.size(); ++i) {
    const std::size_t k = cfg.kernels[i];
    out.push_back({prefix + ".conv" + std::to_string(i), {widths[i], k},
                   Init::uniform(std::sqrt(3.0 / static_cast<double>(k))), true, false});
  }
  if (!cfg.kernels.empty() && cfg.fusion == Fusion::kMixupConv) {
    out.push_back({prefix + ".mix", {b, 3}, Init::uniform(1.0 / std::sqrt(3.0)), true, false});
  }
  if (!cfg.kernels.empty() && cfg.fusion == Fusion::kWeightedSum) {
    out.push_back({prefix + ".alpha", {cfg.kernels.size()},
                   Init::constant(1.0 / static_cast<double>(cfg.kernels.size())), true, false});
  }
  out.push_back({prefix + ".up", {b, d}, Init::zeros(), true, false});
}

void declare_houlsby_site(std::vector<ParamSpec>& out, const EncoderConfig& enc, const AdapterConfig& cfg,
                          const std::string& prefix) {
  const std::size_t d = enc.model_dim, b = cfg.bottleneck;
  out.push_back({prefix + ".ln.weight", {d}, Init::ones(), true, false});
  out.push_back({prefix + ".ln.bias", {d}, Init::zeros(), true, false});
  out.push_back({prefix + ".down.weight", {d, b}, Init::xavier(d, b), true, false});
  out.push_back({prefix + ".down.bias", {b}, Init::zeros(), true, false});
  out.push_back({prefix + ".up.weight", {b, d}, Init::zeros(), true, false});
  out.push_back({prefix + ".up.bias", {d}, Init::zeros(), true, false});
}

}  // namespace

std::vector<ParamSpec> declare_adapter(const EncoderConfig& enc, const AdapterConfig& cfg) {
  cfg.validate(enc);
  std::vector<ParamSpec> out;
  const std::size_t d = enc.model_dim;
  for (std::size_t l = 0; l < enc.num_layers; ++l) {
    switch (cfg.variant) {
      case AdapterVariant::kMultiConv:
      case AdapterVariant::kHoulsby: {
        auto declare = cfg.variant == AdapterVariant::kMultiConv ? declare_multiconv_site : declare_houlsby_site;
        if (cfg.at_mhsa()) declare(out, enc, cfg, adapter_prefix(l, Site::kMhsa));
        if (cfg.at_ffn()) declare(out, enc, cfg, adapter_prefix(l, Site::kFfn));
        break;
      }
      case AdapterVariant::kLoRA:
        for (const char* proj : kAttnProjections) {
          const std::string base = "layers." + std::to_string(l) + ".attn." + proj;
          out.push_back({base + ".lora_a", {d, cfg.rank},
                         Init::uniform(1.0 / std::sqrt(static_cast<double>(d))), true, false});
          out.push_back({base + ".lora_b", {cfg.rank, d}, Init::zeros(), true, false});
        }
        break;
      case AdapterVariant::kNone:
      case AdapterVariant::kBitFit:
      case AdapterVariant::kPrompt:
        break;
    }
  }
  if (cfg.variant == AdapterVariant::kPrompt && cfg.prompt_tokens > 0) {
    out.push_back({"prompt.tokens", {cfg.prompt_tokens, d}, Init::normal(0.02), true, false});
  }
  return out;
}

bool is_bitfit_parameter(const std::string& name) {
  const bool in_block = name.rfind("layers.", 0) == 0;
  const bool is_bias = name.size() >= 5 && name.compare(name.size() - 5, 5, ".bias") == 0;
  const bool backbone_part = name.find(".attn.") != std::string::npos || name.find(".ffn.") != std::string::npos ||
                             name.find(".ln1.") != std::string::npos || name.find(".ln2.") != std::string::npos;
  return in_block && is_bias && backbone_part;
}

template <typename S>
ParamStore<S>& bitfit_mark(ParamStore<S>& params) {
  for (auto& p : params) p.trainable = is_bitfit_parameter(p.name);
  return params;
}

template <typename S>
AdapterBank<S>::AdapterBank(const EncoderConfig& enc, AdapterConfig config, ParamStore<S>& params)
    : config_(std::move(config)), params_(&params), num_layers_(enc.num_layers) {
  // Resolve every expected adapter tensor now so a missing one fails here,
  // not in the middle of a forward pass.
  for (const auto& spec : declare_adapter(enc, config_)) {
    const auto* p = params.find(spec.name);
    if (!p) throw ConfigError("adapter parameter '" + spec.name + "' missing from the parameter store");
    if (p->value.shape() != spec.shape) {
      throw ConfigError("adapter parameter '" + spec.name + "' has shape " + shape_str(p->value.shape()) +
                        ", expected " + shape_str(spec.shape));
    }
  }
}

template <typename S>
MultiConvVars<S> bind_multiconv(ad::Graph<S>& g, const AdapterBank<S>& bank, const std::string& prefix) {
  const auto& cfg = bank.config();
  MultiConvVars<S> v{g.param(bank.at(prefix + ".down")), g.param(bank.at(prefix + ".up")), {}, {}, {}};
  for (std::size_t i = 0; i < cfg.kernels.size(); ++i) {
    v.convs.push_back(g.param(bank.at(prefix + ".conv" + std::to_string(i))));
  }
  if (!cfg.kernels.empty() && cfg.fusion == Fusion::kMixupConv) v.mix = g.param(bank.at(prefix + ".mix"));
  if (!cfg.kernels.empty() && cfg.fusion == Fusion::kWeightedSum) v.alpha = g.param(bank.at(prefix + ".alpha"));
  return v;
}

template <typename S>
Var<S> mixup_fuse(Var<S> h, Var<S> w_mix) {
  return ad::add(h, ad::depthwise_conv1d(h, w_mix));
}

template <typename S>
Var<S> aggregate(Var<S> h, const std::vector<Var<S>>& convs, Fusion mode, const std::optional<Var<S>>& alpha) {
  const std::size_t n = convs.size();
  if (n == 0) return ad::gelu(h);
  if (mode == Fusion::kConcat || mode == Fusion::kMixupConv) {
    std::vector<std::size_t> widths;
    for (const auto& c : convs) widths.push_back(c.value().extent(0));
    auto groups = ad::split(h, 1, std::span<const std::size_t>(widths));
    std::vector<Var<S>> branches;
    for (std::size_t i = 0; i < n; ++i) branches.push_back(ad::gelu(ad::depthwise_conv1d(groups[i], convs[i])));
    return n == 1 ? branches.front() : ad::concat(branches, 1);
  }
  std::optional<Var<S>> total;
  for (std::size_t i = 0; i < n; ++i) {
    Var<S> branch = ad::gelu(ad::depthwise_conv1d(h, convs[i]));
    if (mode == Fusion::kWeightedSum) {
      if (!alpha) throw ConfigError("weighted_sum aggregation needs branch weights");
      branch = ad::mul(branch, ad::reshape(ad::narrow(*alpha, 0, i, 1), Shape{}));
    }
    total = total ? ad::add(*total, branch) : branch;
  }
  return *total;
}

template <typename S>
Var<S> multiconv_forward(Var<S> a, const MultiConvVars<S>& p, const AdapterConfig& cfg) {
  const auto& shape = a.value().shape();
  if (shape.size() != 3) throw ShapeError("multiconv adapter expects [B,T,D], got " + shape_str(shape));
  Var<S> h = ad::transpose(ad::matmul(a, p.down), 1, 2);  // [B, D', T]
  Var<S> z = aggregate(h, p.convs, cfg.fusion, p.alpha);
  if (p.mix) z = mixup_fuse(z, *p.mix);
  return ad::matmul(ad::transpose(z, 1, 2), p.up);
}

template <typename S>
Var<S> lora_linear(Var<S> x, Var<S> w, const Var<S>* bias, Var<S> a, Var<S> b) {
  Var<S> frozen = ad::linear(x, w, bias);
  return ad::add(frozen, ad::matmul(ad::matmul(x, a), b));
}

template <typename S>
HoulsbyVars<S> bind_houlsby(ad::Graph<S>& g, const AdapterBank<S>& bank, const std::string& prefix) {
  return {g.param(bank.at(prefix + ".ln.weight")),   g.param(bank.at(prefix + ".ln.bias")),
          g.param(bank.at(prefix + ".down.weight")), g.param(bank.at(prefix + ".down.bias")),
          g.param(bank.at(prefix + ".up.weight")),   g.param(bank.at(prefix + ".up.bias"))};
}

template <typename S>
Var<S> houlsby_forward(Var<S> a, const HoulsbyVars<S>& p) {
  Var<S> h = ad::layer_norm(a, p.ln_weight, p.ln_bias);
  h = ad::gelu(ad::linear(h, p.down_w, &p.down_b));
  return ad::linear(h, p.up_w, &p.up_b);
}

template <typename S>
Var<S> prompt_prepend(Var<S> h, Var<S> prompts) {
  const auto& hs = h.value().shape();
  const auto& ps = prompts.value().shape();
  if (hs.size() != 3 || ps.size() != 2 || ps[1] != hs[2]) {
    throw ShapeError("prompt_prepend expects h[B,T,D] and prompts[P,D], got " + shape_str(hs) + " and " +
                     shape_str(ps));
  }
  if (ps[0] == 0) return h;
  Var<S> tiled = ad::add(h.graph->input(Tensor<S>(Shape{hs[0], ps[0], hs[2]})), prompts);
  return ad::concat(std::vector<Var<S>>{tiled, h}, 1);
}

#define ADAPTLAB_INSTANTIATE(S)                                                                      \
  template ParamStore<S>& bitfit_mark(ParamStore<S>&);                                               \
  template class AdapterBank<S>;                                                                     \
  template MultiConvVars<S> bind_multiconv(ad::Graph<S>&, const AdapterBank<S>&, const std::string&); \
  template Var<S> multiconv_forward(Var<S>, const MultiConvVars<S>&, const AdapterConfig&);          \
  template Var<S> mixup_fuse(Var<S>, Var<S>);                                                        \
  template Var<S> aggregate(Var<S>, const std::vector<Var<S>>&, Fusion, const std::optional<Var<S>>&); \
  template Var<S> lora_linear(Var<S>, Var<S>, const Var<S>*, Var<S>, Var<S>);                        \
  template HoulsbyVars<S> bind_houlsby(ad::Graph<S>&, const AdapterBank<S>&, const std::string&);    \
  template Var<S> houlsby_forward(Var<S>, const HoulsbyVars<S>&);                                    \
  template Var<S> prompt_prepend(Var<S>, Var<S>);

ADAPTLAB_INSTANTIATE(float)
ADAPTLAB_INSTANTIATE(double)
#undef ADAPTLAB_INSTANTIATE

}  // namespace adaptlab
