#pragma once

#include <string>
#include <string_view>

#include "adaptlab/adapter_config.hpp"
#include "adaptlab/encoder_config.hpp"
#include "adaptlab/spoofbench.hpp"
#include "adaptlab/train.hpp"

namespace adaptlab {

struct ExperimentConfig {
  std::string preset = "toy";
  EncoderConfig encoder = EncoderConfig::toy();
  AdapterConfig adapter = AdapterConfig::multiconv({3, 7, 15, 23}, 16);
  TrainConfig train = TrainConfig::toy();
  CorpusSpec data;
  // Corpus file read by train/eval; empty means generate from `data`.
  std::string corpus_path;

  // Throws ConfigError.
  void validate() const;

  // The method's defaults at this preset's scale (toy bottlenecks are 16).
  AdapterConfig method_defaults(std::string_view method) const;

  // Every field with defaults materialized, in the file syntax; parsing the
  // result reproduces this config.
  std::string resolved() const;

  // toy: toy encoder, MultiConv K={3,7,15,23} D'=16, toy schedule.
  // xlsr: XLSR encoder, MultiConv D'=64, reference schedule.
  static ExperimentConfig from_preset(std::string_view name);
};

// Applies `key = value` lines under [encoder], [adapter], [train] and [data]
// on top of `base`. Unknown sections or keys, duplicates, and malformed values
// throw ConfigError naming the line.
ExperimentConfig parse_experiment_config(std::string_view text, const ExperimentConfig& base = {});

// Throws ConfigError when the file cannot be read.
ExperimentConfig load_experiment_config(const std::string& path, const ExperimentConfig& base = {});

}  // namespace adaptlab
