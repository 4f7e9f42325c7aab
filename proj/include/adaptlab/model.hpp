#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "adaptlab/adapters.hpp"
#include "adaptlab/encoder.hpp"

namespace adaptlab {

enum class TrainMode { kPeft, kFullTune, kFrozenOnly };

std::string_view to_string(TrainMode m);
TrainMode parse_train_mode(std::string_view name);

// Every parameter of backbone + adapter + head with trainable flags applied
// for the mode: peft trains the method's parameters and the head, full_tune
// trains everything, frozen_only trains nothing.
std::vector<ParamSpec> declare_parameters(const EncoderConfig& enc, const AdapterConfig& adapter, TrainMode mode);

inline bool is_head_parameter(std::string_view name) { return name.starts_with("head."); }

template <typename S>
struct Model {
  EncoderConfig encoder;
  AdapterConfig adapter;
  TrainMode mode = TrainMode::kPeft;
  ParamStore<S> params;

  // Null for the adapter-free backbone.
  std::optional<AdapterBank<S>> bank();
};

template <typename S>
Model<S> build_model(const EncoderConfig& enc, const AdapterConfig& adapter, TrainMode mode, std::uint64_t seed);

// Logits [B, 2] for features x [B, T, F].
template <typename S>
ad::Var<S> forward_logits(ad::Graph<S>& g, Model<S>& model, const Tensor<S>& x);

}  // namespace adaptlab
