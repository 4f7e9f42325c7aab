#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace adaptlab {

struct EncoderConfig {
  std::size_t num_layers = 2;
  std::size_t model_dim = 64;
  std::size_t inner_dim = 128;
  std::size_t num_heads = 4;
  std::size_t input_dim = 16;
  std::size_t max_seq_len = 512;
  bool pre_norm = true;
  bool positional = true;
  // Seed for the frozen backbone weights; independent of the training seed.
  std::uint64_t init_seed = 0;

  std::size_t head_dim() const { return model_dim / num_heads; }

  // Throws ConfigError when an invariant is violated.
  void validate() const;

  // Wav2Vec2 XLSR transformer shape; used for parameter audits only.
  static EncoderConfig xlsr();
  static EncoderConfig toy();
  // Throws ConfigError for unknown names.
  static EncoderConfig preset(const std::string& name);
};

}  // namespace adaptlab
