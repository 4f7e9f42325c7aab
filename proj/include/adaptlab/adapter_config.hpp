#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "adaptlab/encoder_config.hpp"

namespace adaptlab {

enum class AdapterVariant { kNone, kMultiConv, kHoulsby, kLoRA, kBitFit, kPrompt };
enum class Fusion { kMixupConv, kSum, kWeightedSum, kConcat };
enum class Placement { kMhsa, kFfn, kBoth };

std::string_view to_string(AdapterVariant v);
std::string_view to_string(Fusion f);
std::string_view to_string(Placement p);
// Case-insensitive; throws ConfigError listing the accepted names.
AdapterVariant parse_variant(std::string_view name);
Fusion parse_fusion(std::string_view name);
Placement parse_placement(std::string_view name);

struct AdapterConfig {
  AdapterVariant variant = AdapterVariant::kNone;
  // MultiConv and Houlsby bottleneck width D'.
  std::size_t bottleneck = 64;
  // MultiConv kernel sizes, one branch each. Empty selects the plain
  // bottleneck (down, GELU, up).
  std::vector<std::size_t> kernels{3, 7, 15, 23};
  Fusion fusion = Fusion::kMixupConv;
  Placement placement = Placement::kMhsa;
  std::size_t rank = 16;
  std::size_t prompt_tokens = 30;

  bool at_mhsa() const { return placement != Placement::kFfn; }
  bool at_ffn() const { return placement != Placement::kMhsa; }
  std::size_t num_sites() const { return placement == Placement::kBoth ? 2 : 1; }
  std::size_t kernel_sum() const;

  void validate(const EncoderConfig& enc) const;

  static AdapterConfig none();
  static AdapterConfig multiconv(std::vector<std::size_t> kernels = {3, 7, 15, 23},
                                 std::size_t bottleneck = 64, Fusion fusion = Fusion::kMixupConv,
                                 Placement placement = Placement::kMhsa);
  static AdapterConfig houlsby(std::size_t bottleneck = 64);
  static AdapterConfig lora(std::size_t rank = 16);
  static AdapterConfig bitfit();
  static AdapterConfig prompt(std::size_t tokens = 30);
  // Reference configuration of a method by name ("multiconv", "lora", ...).
  static AdapterConfig for_method(std::string_view method);
};

}  // namespace adaptlab
