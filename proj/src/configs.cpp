#include <algorithm>
#include <cctype>
#include <numeric>

#include "adaptlab/adapter_config.hpp"
#include "adaptlab/encoder_config.hpp"
#include "adaptlab/errors.hpp"

namespace adaptlab {

void EncoderConfig::validate() const {
  if (num_layers < 1 || model_dim < 1 || inner_dim < 1 || num_heads < 1 || input_dim < 1 ||
      max_seq_len < 1) {
    throw ConfigError("encoder extents must all be >= 1");
  }
  if (model_dim % num_heads != 0) {
    throw ConfigError("model_dim " + std::to_string(model_dim) + " is not divisible by num_heads " +
                      std::to_string(num_heads));
  }
}

EncoderConfig EncoderConfig::xlsr() {
  EncoderConfig c;
  c.num_layers = 24;
  c.model_dim = 1024;
  c.inner_dim = 4096;
  c.num_heads = 16;
  c.input_dim = 512;
  c.max_seq_len = 512;
  return c;
}

EncoderConfig EncoderConfig::toy() { return EncoderConfig{}; }

EncoderConfig EncoderConfig::preset(const std::string& name) {
  if (name == "xlsr") return xlsr();
  if (name == "toy") return toy();
  throw ConfigError("unknown encoder preset '" + name + "' (expected xlsr or toy)");
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  std::replace(out.begin(), out.end(), '-', '_');
  return out;
}

}  // namespace

std::string_view to_string(AdapterVariant v) {
  switch (v) {
    case AdapterVariant::kNone: return "none";
    case AdapterVariant::kMultiConv: return "multiconv";
    case AdapterVariant::kHoulsby: return "houlsby";
    case AdapterVariant::kLoRA: return "lora";
    case AdapterVariant::kBitFit: return "bitfit";
    case AdapterVariant::kPrompt: return "prompt";
  }
  return "?";
}

std::string_view to_string(Fusion f) {
  switch (f) {
    case Fusion::kMixupConv: return "mixup_conv";
    case Fusion::kSum: return "sum";
    case Fusion::kWeightedSum: return "weighted_sum";
    case Fusion::kConcat: return "concat";
  }
  return "?";
}

std::string_view to_string(Placement p) {
  switch (p) {
    case Placement::kMhsa: return "mhsa";
    case Placement::kFfn: return "ffn";
    case Placement::kBoth: return "both";
  }
  return "?";
}

AdapterVariant parse_variant(std::string_view name) {
  const auto s = lower(name);
  for (auto v : {AdapterVariant::kNone, AdapterVariant::kMultiConv, AdapterVariant::kHoulsby,
                 AdapterVariant::kLoRA, AdapterVariant::kBitFit, AdapterVariant::kPrompt}) {
    if (s == to_string(v)) return v;
  }
  throw ConfigError("unknown adapter variant '" + std::string(name) +
                    "' (expected none, multiconv, houlsby, lora, bitfit, prompt)");
}

Fusion parse_fusion(std::string_view name) {
  const auto s = lower(name);
  for (auto f : {Fusion::kMixupConv, Fusion::kSum, Fusion::kWeightedSum, Fusion::kConcat}) {
    if (s == to_string(f)) return f;
  }
  if (s == "mixupconv" || s == "mixup") return Fusion::kMixupConv;
  if (s == "weightedsum") return Fusion::kWeightedSum;
  throw ConfigError("unknown fusion '" + std::string(name) +
                    "' (expected mixup_conv, sum, weighted_sum, concat)");
}

Placement parse_placement(std::string_view name) {
  const auto s = lower(name);
  for (auto p : {Placement::kMhsa, Placement::kFfn, Placement::kBoth}) {
    if (s == to_string(p)) return p;
  }
  throw ConfigError("unknown placement '" + std::string(name) + "' (expected mhsa, ffn, both)");
}

std::size_t AdapterConfig::kernel_sum() const {
  return std::accumulate(kernels.begin(), kernels.end(), std::size_t{0});
}

void AdapterConfig::validate(const EncoderConfig& enc) const {
  switch (variant) {
    case AdapterVariant::kMultiConv: {
      if (bottleneck < 1) throw ConfigError("multiconv bottleneck must be >= 1");
      for (auto k : kernels) {
        if (k < 1 || k % 2 == 0) {
          throw ConfigError("multiconv kernel sizes must be odd and >= 1, got " + std::to_string(k));
        }
      }
      const bool split = fusion == Fusion::kConcat || fusion == Fusion::kMixupConv;
      if (split && !kernels.empty() && bottleneck % kernels.size() != 0) {
        throw ConfigError("bottleneck " + std::to_string(bottleneck) + " is not divisible by " +
                          std::to_string(kernels.size()) + " kernel branches under " +
                          std::string(to_string(fusion)) + " fusion");
      }
      break;
    }
    case AdapterVariant::kHoulsby:
      if (bottleneck < 1) throw ConfigError("houlsby bottleneck must be >= 1");
      break;
    case AdapterVariant::kLoRA:
      if (rank < 1) throw ConfigError("lora rank must be >= 1");
      if (rank >= enc.model_dim) {
        throw ConfigError("lora rank " + std::to_string(rank) + " must be below min(d_in, d_out) = " +
                          std::to_string(enc.model_dim));
      }
      break;
    case AdapterVariant::kPrompt:
    case AdapterVariant::kBitFit:
    case AdapterVariant::kNone:
      break;
  }
}

AdapterConfig AdapterConfig::none() { return AdapterConfig{}; }

AdapterConfig AdapterConfig::multiconv(std::vector<std::size_t> kernels, std::size_t bottleneck,
                                       Fusion fusion, Placement placement) {
  AdapterConfig c;
  c.variant = AdapterVariant::kMultiConv;
  c.kernels = std::move(kernels);
  c.bottleneck = bottleneck;
  c.fusion = fusion;
  c.placement = placement;
  return c;
}

AdapterConfig AdapterConfig::houlsby(std::size_t bottleneck) {
  AdapterConfig c;
  c.variant = AdapterVariant::kHoulsby;
  c.bottleneck = bottleneck;
  c.placement = Placement::kBoth;
  return c;
}

AdapterConfig AdapterConfig::lora(std::size_t rank) {
  AdapterConfig c;
  c.variant = AdapterVariant::kLoRA;
  c.rank = rank;
  return c;
}

AdapterConfig AdapterConfig::bitfit() {
  AdapterConfig c;
  c.variant = AdapterVariant::kBitFit;
  return c;
}

AdapterConfig AdapterConfig::prompt(std::size_t tokens) {
  AdapterConfig c;
  c.variant = AdapterVariant::kPrompt;
  c.prompt_tokens = tokens;
  return c;
}

AdapterConfig AdapterConfig::for_method(std::string_view method) {
  switch (parse_variant(method)) {
    case AdapterVariant::kNone: return none();
    case AdapterVariant::kMultiConv: return multiconv();
    case AdapterVariant::kHoulsby: return houlsby();
    case AdapterVariant::kLoRA: return lora();
    case AdapterVariant::kBitFit: return bitfit();
    case AdapterVariant::kPrompt: return prompt();
  }
  return none();
}

}  // namespace adaptlab
