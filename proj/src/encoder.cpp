#include "adaptlab/encoder.hpp"

#include <cmath>

namespace adaptlab {

using ad::Var;

namespace {

std::string layer_name(std::size_t l, const std::string& rest) {
  return "layers." + std::to_string(l) + "." + rest;
}

void declare_linear(std::vector<ParamSpec>& out, const std::string& name, std::size_t in, std::size_t outd) {
  out.push_back({name + ".weight", {in, outd}, Init::xavier(in, outd), false, true});
  out.push_back({name + ".bias", {outd}, Init::zeros(), false, true});
}

void declare_ln(std::vector<ParamSpec>& out, const std::string& name, std::size_t d) {
  out.push_back({name + ".weight", {d}, Init::ones(), false, true});
  out.push_back({name + ".bias", {d}, Init::zeros(), false, true});
}

}  // namespace

std::vector<ParamSpec> declare_backbone(const EncoderConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.model_dim;
  std::vector<ParamSpec> out;
  declare_linear(out, "input_proj", cfg.input_dim, d);
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    declare_ln(out, layer_name(l, "ln1"), d);
    for (const char* proj : kAttnProjections) declare_linear(out, layer_name(l, std::string("attn.") + proj), d, d);
    declare_ln(out, layer_name(l, "ln2"), d);
    declare_linear(out, layer_name(l, "ffn.fc1"), d, cfg.inner_dim);
    declare_linear(out, layer_name(l, "ffn.fc2"), cfg.inner_dim, d);
  }
  if (cfg.pre_norm) declare_ln(out, "final_ln", d);
  return out;
}

std::vector<ParamSpec> declare_head(const EncoderConfig& cfg) {
  const std::size_t d = cfg.model_dim;
  return {
      {"head.weight", {d, 2}, Init::normal(1.0 / std::sqrt(static_cast<double>(d))), true, false},
      {"head.bias", {2}, Init::zeros(), true, false},
  };
}

template <typename S>
Tensor<S> sinusoidal_positions(std::size_t steps, std::size_t dim) {
  Tensor<S> pe(Shape{steps, dim});
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < dim; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(dim));
      pe[t * dim + i] = static_cast<S>(std::sin(static_cast<double>(t) * freq));
      if (i + 1 < dim) pe[t * dim + i + 1] = static_cast<S>(std::cos(static_cast<double>(t) * freq));
    }
  }
  return pe;
}

template <typename S>
AttentionVars<S> bind_attention(ad::Graph<S>& g, ParamStore<S>& params, std::size_t layer,
                                const AdapterBank<S>* bank) {
  AttentionVars<S> v{};
  const bool lora = bank && bank->config().variant == AdapterVariant::kLoRA;
  for (int i = 0; i < 4; ++i) {
    const std::string base = layer_name(layer, std::string("attn.") + kAttnProjections[i]);
    v.w[i] = g.param(params.at(base + ".weight"));
    v.b[i] = g.param(params.at(base + ".bias"));
    if (lora) {
      v.lora_a[i] = g.param(bank->at(base + ".lora_a"));
      v.lora_b[i] = g.param(bank->at(base + ".lora_b"));
    }
  }
  return v;
}

namespace {

template <typename S>
Var<S> projection(const AttentionVars<S>& p, int i, Var<S> x) {
  if (p.lora_a[i]) return lora_linear(x, p.w[i], &p.b[i], *p.lora_a[i], *p.lora_b[i]);
  return ad::linear(x, p.w[i], &p.b[i]);
}

// [B, T, D] -> [B, H, T, D/H]
template <typename S>
Var<S> ffn(ad::Graph<S>& g, ParamStore<S>& params, std::size_t l, Var<S> x) {
  Var<S> w1 = g.param(params.at(layer_name(l, "ffn.fc1.weight")));
  Var<S> b1 = g.param(params.at(layer_name(l, "ffn.fc1.bias")));
  Var<S> w2 = g.param(params.at(layer_name(l, "ffn.fc2.weight")));
  Var<S> b2 = g.param(params.at(layer_name(l, "ffn.fc2.bias")));
  return ad::linear(ad::gelu(ad::linear(x, w1, &b1)), w2, &b2);
}

template <typename S>
Var<S> ln(ad::Graph<S>& g, ParamStore<S>& params, const std::string& name, Var<S> x) {
  return ad::layer_norm(x, g.param(params.at(name + ".weight")), g.param(params.at(name + ".bias")));
}

// Parallel adapter branch on a sublayer output, or nullopt when the bank
// has nothing at this site.
template <typename S>
std::optional<Var<S>> adapter_branch(ad::Graph<S>& g, const AdapterBank<S>* bank, std::size_t l, Site site,
                                     Var<S> sub) {
  if (!bank) return std::nullopt;
  const auto& cfg = bank->config();
  const bool here = site == Site::kMhsa ? cfg.at_mhsa() : cfg.at_ffn();
  if (!here) return std::nullopt;
  const std::string prefix = adapter_prefix(l, site);
  if (cfg.variant == AdapterVariant::kMultiConv) return multiconv_forward(sub, bind_multiconv(g, *bank, prefix), cfg);
  if (cfg.variant == AdapterVariant::kHoulsby) return houlsby_forward(sub, bind_houlsby(g, *bank, prefix));
  return std::nullopt;
}

// h + sub (+ adapter(sub)), with the adapter term added last.
template <typename S>
Var<S> merge(Var<S> h, Var<S> sub, const std::optional<Var<S>>& branch) {
  Var<S> out = ad::add(h, sub);
  return branch ? ad::add(out, *branch) : out;
}

}  // namespace

template <typename S>
Var<S> mhsa(const AttentionVars<S>& p, Var<S> x, std::size_t num_heads) {
  const auto shape = x.value().shape();
  if (shape.size() != 3 || shape[2] % num_heads != 0) {
    throw ShapeError("mhsa expects [B,T,D] with D divisible by " + std::to_string(num_heads) + ", got " +
                     shape_str(shape));
  }
  Var<S> ctx = ad::attention(projection(p, 0, x), projection(p, 1, x), projection(p, 2, x), num_heads);
  return projection(p, 3, ctx);
}

template <typename S>
Var<S> encoder_forward(const EncoderConfig& cfg, ParamStore<S>& params, Var<S> x, const AdapterBank<S>* adapter) {
  auto& g = *x.graph;
  const auto xs = x.value().shape();
  if (xs.size() != 3 || xs[2] != cfg.input_dim) {
    throw ShapeError("encoder input must be [B,T," + std::to_string(cfg.input_dim) + "], got " + shape_str(xs));
  }
  if (adapter && adapter->num_layers() != cfg.num_layers) {
    throw ConfigError("adapter bank has " + std::to_string(adapter->num_layers()) + " layers, encoder has " +
                      std::to_string(cfg.num_layers));
  }
  const std::size_t steps = xs[1];
  const bool prompted = adapter && adapter->config().variant == AdapterVariant::kPrompt &&
                        adapter->config().prompt_tokens > 0;
  const std::size_t num_prompts = prompted ? adapter->config().prompt_tokens : 0;
  if (steps + num_prompts > cfg.max_seq_len) {
    throw ShapeError("sequence length " + std::to_string(steps + num_prompts) + " exceeds max_seq_len " +
                     std::to_string(cfg.max_seq_len));
  }

  Var<S> w_in = g.param(params.at("input_proj.weight"));
  Var<S> b_in = g.param(params.at("input_proj.bias"));
  Var<S> h = ad::linear(x, w_in, &b_in);
  if (cfg.positional) h = ad::add(h, g.input(sinusoidal_positions<S>(steps, cfg.model_dim)));
  if (prompted) h = prompt_prepend(h, g.param(adapter->at("prompt.tokens")));

  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const auto attn = bind_attention(g, params, l, adapter);
    if (cfg.pre_norm) {
      Var<S> a = mhsa(attn, ln(g, params, layer_name(l, "ln1"), h), cfg.num_heads);
      h = merge(h, a, adapter_branch(g, adapter, l, Site::kMhsa, a));
      Var<S> f = ffn(g, params, l, ln(g, params, layer_name(l, "ln2"), h));
      h = merge(h, f, adapter_branch(g, adapter, l, Site::kFfn, f));
    } else {
      Var<S> a = mhsa(attn, h, cfg.num_heads);
      h = ln(g, params, layer_name(l, "ln1"), merge(h, a, adapter_branch(g, adapter, l, Site::kMhsa, a)));
      Var<S> f = ffn(g, params, l, h);
      h = ln(g, params, layer_name(l, "ln2"), merge(h, f, adapter_branch(g, adapter, l, Site::kFfn, f)));
    }
  }
  if (cfg.pre_norm) h = ln(g, params, "final_ln", h);
  if (num_prompts > 0) h = ad::narrow(h, 1, num_prompts, steps);
  return h;
}

template <typename S>
Var<S> classify(Var<S> h, ParamStore<S>& params) {
  auto& g = *h.graph;
  Var<S> w = g.param(params.at("head.weight"));
  Var<S> b = g.param(params.at("head.bias"));
  return ad::linear(ad::mean(h, 1), w, &b);
}

template <typename S>
std::vector<double> detection_scores(const Tensor<S>& logits) {
  if (logits.rank() != 2 || logits.extent(1) != 2) {
    throw ShapeError("detection scores need [B,2] logits, got " + shape_str(logits.shape()));
  }
  std::vector<double> out(logits.extent(0));
  for (std::size_t b = 0; b < out.size(); ++b) {
    out[b] = static_cast<double>(logits[2 * b]) - static_cast<double>(logits[2 * b + 1]);
  }
  return out;
}

#define ADAPTLAB_INSTANTIATE(S)                                                                           \
  template Tensor<S> sinusoidal_positions<S>(std::size_t, std::size_t);                                   \
  template AttentionVars<S> bind_attention(ad::Graph<S>&, ParamStore<S>&, std::size_t, const AdapterBank<S>*); \
  template Var<S> mhsa(const AttentionVars<S>&, Var<S>, std::size_t);                                     \
  template Var<S> encoder_forward(const EncoderConfig&, ParamStore<S>&, Var<S>, const AdapterBank<S>*);   \
  template Var<S> classify(Var<S>, ParamStore<S>&);                                                       \
  template std::vector<double> detection_scores(const Tensor<S>&);

ADAPTLAB_INSTANTIATE(float)
ADAPTLAB_INSTANTIATE(double)
#undef ADAPTLAB_INSTANTIATE

}  // namespace adaptlab
