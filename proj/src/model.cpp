#include "adaptlab/model.hpp"

#include <algorithm>

#include "adaptlab/errors.hpp"

namespace adaptlab {

std::string_view to_string(TrainMode m) {
  switch (m) {
    case TrainMode::kPeft: return "peft";
    case TrainMode::kFullTune: return "full_tune";
    case TrainMode::kFrozenOnly: return "frozen_only";
  }
  return "?";
}

TrainMode parse_train_mode(std::string_view name) {
  for (auto m : {TrainMode::kPeft, TrainMode::kFullTune, TrainMode::kFrozenOnly}) {
    if (name == to_string(m)) return m;
  }
  throw ConfigError("unknown train mode '" + std::string(name) + "' (expected peft, full_tune, frozen_only)");
}

std::vector<ParamSpec> declare_parameters(const EncoderConfig& enc, const AdapterConfig& adapter, TrainMode mode) {
  auto specs = declare_backbone(enc);
  auto extra = declare_adapter(enc, adapter);
  specs.insert(specs.end(), extra.begin(), extra.end());
  auto head = declare_head(enc);
  specs.insert(specs.end(), head.begin(), head.end());

  for (auto& s : specs) {
    switch (mode) {
      case TrainMode::kFullTune:
        s.trainable = true;
        break;
      case TrainMode::kFrozenOnly:
        s.trainable = false;
        break;
      case TrainMode::kPeft:
        if (s.backbone) {
          s.trainable = adapter.variant == AdapterVariant::kBitFit && is_bitfit_parameter(s.name);
        } else {
          s.trainable = true;
        }
        break;
    }
  }
  return specs;
}

template <typename S>
std::optional<AdapterBank<S>> Model<S>::bank() {
  if (adapter.variant == AdapterVariant::kNone || adapter.variant == AdapterVariant::kBitFit) return std::nullopt;
  return AdapterBank<S>(encoder, adapter, params);
}

template <typename S>
Model<S> build_model(const EncoderConfig& enc, const AdapterConfig& adapter, TrainMode mode, std::uint64_t seed) {
  Model<S> m{enc, adapter, mode, instantiate<S>(declare_parameters(enc, adapter, mode), enc.init_seed, seed)};
  return m;
}

template <typename S>
ad::Var<S> forward_logits(ad::Graph<S>& g, Model<S>& model, const Tensor<S>& x) {
  auto bank = model.bank();
  ad::Var<S> h = encoder_forward(model.encoder, model.params, g.input(x), bank ? &*bank : nullptr);
  return classify(h, model.params);
}

template struct Model<float>;
template struct Model<double>;
template Model<float> build_model<float>(const EncoderConfig&, const AdapterConfig&, TrainMode, std::uint64_t);
template Model<double> build_model<double>(const EncoderConfig&, const AdapterConfig&, TrainMode, std::uint64_t);
template ad::Var<float> forward_logits(ad::Graph<float>&, Model<float>&, const Tensor<float>&);
template ad::Var<double> forward_logits(ad::Graph<double>&, Model<double>&, const Tensor<double>&);

}  // namespace adaptlab
