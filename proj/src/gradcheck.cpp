#include "adaptlab/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>

#include "adaptlab/adapters.hpp"
#include "adaptlab/encoder.hpp"
#include "adaptlab/errors.hpp"
#include "adaptlab/model.hpp"
#include "adaptlab/ops.hpp"
#include "adaptlab/split_rng.hpp"

namespace adaptlab {

namespace {

using T = Tensor<double>;
using V = ad::Var<double>;
using G = ad::Graph<double>;

// Coordinates sampled per trial when a case has more.
constexpr std::size_t kMaxCoordinates = 48;

struct Case {
  std::vector<T> inputs;
  std::shared_ptr<Model<double>> model;
  std::function<std::vector<V>(G&, const std::vector<V>&, Model<double>*)> fn;
};

using Builder = std::function<Case(SplitRng&)>;

std::size_t pick(SplitRng& r, std::size_t lo, std::size_t hi) {
  return static_cast<std::size_t>(r.uniform_int(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
}

T randn(SplitRng& r, Shape shape, double sd = 1.0) {
  T t(std::move(shape));
  for (auto& v : t.data()) v = sd * r.normal();
  return t;
}

Shape random_shape(SplitRng& r, std::size_t min_rank = 1, std::size_t max_rank = 3) {
  Shape s(pick(r, min_rank, max_rank));
  for (auto& e : s) e = pick(r, 1, 4);
  return s;
}

// Same shape, or a random suffix of it for the second operand.
std::pair<Shape, Shape> broadcast_pair(SplitRng& r) {
  Shape a = random_shape(r);
  const std::size_t drop = pick(r, 0, a.size());
  Shape b(a.begin() + static_cast<std::ptrdiff_t>(drop), a.end());
  if (r.uniform() < 0.5) std::swap(a, b);
  return {a, b};
}

Case unary(SplitRng& r, std::function<V(V)> op, double sd = 1.0) {
  return {{randn(r, random_shape(r), sd)}, nullptr, [op](G&, const std::vector<V>& in, Model<double>*) {
            return std::vector<V>{op(in[0])};
          }};
}

Case binary(SplitRng& r, std::function<V(V, V)> op) {
  auto [a, b] = broadcast_pair(r);
  return {{randn(r, a), randn(r, b)}, nullptr, [op](G&, const std::vector<V>& in, Model<double>*) {
            return std::vector<V>{op(in[0], in[1])};
          }};
}

EncoderConfig tiny_encoder() {
  EncoderConfig e;
  e.num_layers = 1;
  e.model_dim = 8;
  e.inner_dim = 16;
  e.num_heads = 2;
  e.input_dim = 3;
  e.max_seq_len = 16;
  return e;
}

// Zero-initialized up-projections would hide every upstream gradient, so all
// parameters are redrawn.
void randomize(ParamStore<double>& params, SplitRng& r) {
  for (auto& p : params) {
    for (auto& v : p.value.data()) v = 0.4 * r.normal();
  }
}

Case encoder_case(SplitRng& r, AdapterConfig adapter, TrainMode mode) {
  const auto enc = tiny_encoder();
  auto model = std::make_shared<Model<double>>(build_model<double>(enc, adapter, mode, r.child("init").next_u64()));
  randomize(model->params, r);
  const std::size_t batch = pick(r, 1, 2), steps = pick(r, 2, 4);
  return {{randn(r, {batch, steps, enc.input_dim})}, model, [](G&, const std::vector<V>& in, Model<double>* m) {
            auto bank = m->bank();
            V h = encoder_forward(m->encoder, m->params, in[0], bank ? &*bank : nullptr);
            return std::vector<V>{classify(h, m->params)};
          }};
}

AdapterConfig tiny_multiconv(Fusion fusion, std::vector<std::size_t> kernels = {3, 5}) {
  return AdapterConfig::multiconv(std::move(kernels), 4, fusion, Placement::kBoth);
}

std::vector<std::pair<std::string, Builder>> registry() {
  std::vector<std::pair<std::string, Builder>> out;
  auto add = [&](std::string name, Builder b) { out.emplace_back(std::move(name), std::move(b)); };

  add("add", [](SplitRng& r) { return binary(r, [](V a, V b) { return ad::add(a, b); }); });
  add("sub", [](SplitRng& r) { return binary(r, [](V a, V b) { return ad::sub(a, b); }); });
  add("mul", [](SplitRng& r) { return binary(r, [](V a, V b) { return ad::mul(a, b); }); });
  add("scale", [](SplitRng& r) {
    const double f = r.uniform(-2.0, 2.0);
    return unary(r, [f](V a) { return ad::scale(a, f); });
  });
  add("matmul", [](SplitRng& r) {
    const std::size_t m = pick(r, 1, 4), k = pick(r, 1, 4), n = pick(r, 1, 4), b = pick(r, 1, 3);
    // Plain, batched, and either operand broadcast over the other's batch.
    const std::size_t form = pick(r, 0, 3);
    const Shape sa = form == 1 || form == 2 ? Shape{b, m, k} : Shape{m, k};
    const Shape sb = form == 1 || form == 3 ? Shape{b, k, n} : Shape{k, n};
    return Case{{randn(r, sa), randn(r, sb)}, nullptr,
                [](G&, const std::vector<V>& in, Model<double>*) { return std::vector<V>{ad::matmul(in[0], in[1])}; }};
  });
  add("transpose", [](SplitRng& r) {
    const std::size_t a0 = pick(r, 0, 2), a1 = pick(r, 0, 2);
    return Case{{randn(r, random_shape(r, 3, 3))}, nullptr, [a0, a1](G&, const std::vector<V>& in, Model<double>*) {
                  return std::vector<V>{ad::transpose(in[0], a0, a1)};
                }};
  });
  add("reshape", [](SplitRng& r) {
    const std::size_t a = pick(r, 1, 4), b = pick(r, 1, 4), c = pick(r, 1, 4);
    return Case{{randn(r, {a, b, c})}, nullptr, [a, b, c](G&, const std::vector<V>& in, Model<double>*) {
                  return std::vector<V>{ad::reshape(in[0], Shape{a * b, c})};
                }};
  });
  add("concat", [](SplitRng& r) {
    Shape base = random_shape(r, 1, 3);
    const std::size_t axis = pick(r, 0, base.size() - 1);
    std::vector<T> parts;
    for (std::size_t i = 0, n = pick(r, 2, 3); i < n; ++i) {
      Shape s = base;
      s[axis] = pick(r, 1, 3);
      parts.push_back(randn(r, s));
    }
    return Case{parts, nullptr, [axis](G&, const std::vector<V>& in, Model<double>*) {
                  return std::vector<V>{ad::concat(in, axis)};
                }};
  });
  add("narrow", [](SplitRng& r) {
    Shape s = random_shape(r, 1, 3);
    const std::size_t axis = pick(r, 0, s.size() - 1);
    s[axis] = pick(r, 2, 5);
    const std::size_t start = pick(r, 0, s[axis] - 1), len = pick(r, 1, s[axis] - start);
    return Case{{randn(r, s)}, nullptr, [axis, start, len](G&, const std::vector<V>& in, Model<double>*) {
                  return std::vector<V>{ad::narrow(in[0], axis, start, len)};
                }};
  });
  add("split", [](SplitRng& r) {
    Shape s = random_shape(r, 1, 3);
    const std::size_t axis = pick(r, 0, s.size() - 1);
    std::vector<std::size_t> sizes;
    std::size_t total = 0;
    for (std::size_t i = 0, n = pick(r, 1, 3); i < n; ++i) total += sizes.emplace_back(pick(r, 1, 3));
    s[axis] = total;
    return Case{{randn(r, s)}, nullptr, [axis, sizes](G&, const std::vector<V>& in, Model<double>*) {
                  return ad::split(in[0], axis, std::span<const std::size_t>(sizes));
                }};
  });
  add("softmax", [](SplitRng& r) { return unary(r, [](V a) { return ad::softmax(a); }, 2.0); });
  add("log_softmax", [](SplitRng& r) { return unary(r, [](V a) { return ad::log_softmax(a); }, 2.0); });
  add("gelu", [](SplitRng& r) { return unary(r, [](V a) { return ad::gelu(a); }, 2.0); });
  add("layer_norm", [](SplitRng& r) {
    Shape s = random_shape(r, 1, 3);
    s.back() = pick(r, 2, 5);
    return Case{{randn(r, s), randn(r, {s.back()}), randn(r, {s.back()})}, nullptr,
                [](G&, const std::vector<V>& in, Model<double>*) {
                  return std::vector<V>{ad::layer_norm(in[0], in[1], in[2])};
                }};
  });
  add("mean", [](SplitRng& r) {
    Shape s = random_shape(r, 1, 3);
    const std::size_t axis = pick(r, 0, s.size() - 1);
    return Case{{randn(r, s)}, nullptr, [axis](G&, const std::vector<V>& in, Model<double>*) {
                  return std::vector<V>{ad::mean(in[0], axis)};
                }};
  });
  add("sum", [](SplitRng& r) { return unary(r, [](V a) { return ad::sum(a); }); });
  for (const bool raw_logits : {false, true}) {
    add(raw_logits ? "cross_entropy" : "nll_loss", [raw_logits](SplitRng& r) {
      const std::size_t b = pick(r, 1, 4), c = pick(r, 2, 4);
      std::vector<int> labels(b);
      for (auto& l : labels) l = static_cast<int>(pick(r, 0, c - 1));
      return Case{{randn(r, {b, c})}, nullptr, [labels, raw_logits](G&, const std::vector<V>& in, Model<double>*) {
                    return std::vector<V>{raw_logits ? ad::cross_entropy(in[0], std::span<const int>(labels))
                                                     : ad::nll_loss(in[0], std::span<const int>(labels))};
                  }};
    });
  }
  add("depthwise_conv1d", [](SplitRng& r) {
    const std::size_t b = pick(r, 1, 2), c = pick(r, 1, 3), t = pick(r, 1, 6), k = 2 * pick(r, 0, 3) + 1;
    return Case{{randn(r, {b, c, t}), randn(r, {c, k})}, nullptr, [](G&, const std::vector<V>& in, Model<double>*) {
                  return std::vector<V>{ad::depthwise_conv1d(in[0], in[1])};
                }};
  });
  add("attention", [](SplitRng& r) {
    const std::size_t b = pick(r, 1, 2), t = pick(r, 1, 4), h = pick(r, 1, 2), d = h * pick(r, 1, 3);
    return Case{{randn(r, {b, t, d}), randn(r, {b, t, d}), randn(r, {b, t, d})}, nullptr,
                [h](G&, const std::vector<V>& in, Model<double>*) {
                  return std::vector<V>{ad::attention(in[0], in[1], in[2], h)};
                }};
  });
  add("linear", [](SplitRng& r) {
    const std::size_t i = pick(r, 1, 4), o = pick(r, 1, 4);
    const bool bias = r.uniform() < 0.5;
    std::vector<T> in{randn(r, {pick(r, 1, 2), pick(r, 1, 3), i}), randn(r, {i, o})};
    if (bias) in.push_back(randn(r, {o}));
    return Case{in, nullptr, [bias](G&, const std::vector<V>& v, Model<double>*) {
                  return std::vector<V>{ad::linear(v[0], v[1], bias ? &v[2] : nullptr)};
                }};
  });

  add("mhsa", [](SplitRng& r) {
    const std::size_t b = pick(r, 1, 2), t = pick(r, 1, 4), h = pick(r, 1, 2), d = h * pick(r, 1, 3);
    std::vector<T> in{randn(r, {b, t, d})};
    for (int i = 0; i < 4; ++i) in.push_back(randn(r, {d, d}, 0.5));
    for (int i = 0; i < 4; ++i) in.push_back(randn(r, {d}, 0.5));
    return Case{in, nullptr, [h](G&, const std::vector<V>& v, Model<double>*) {
                  AttentionVars<double> p{{v[1], v[2], v[3], v[4]}, {v[5], v[6], v[7], v[8]}, {}, {}};
                  return std::vector<V>{mhsa(p, v[0], h)};
                }};
  });
  add("encoder", [](SplitRng& r) { return encoder_case(r, AdapterConfig::none(), TrainMode::kFullTune); });

  for (auto fusion : {Fusion::kMixupConv, Fusion::kConcat, Fusion::kSum, Fusion::kWeightedSum}) {
    add("multiconv_" + std::string(to_string(fusion)), [fusion](SplitRng& r) {
      const std::size_t d = 6, bneck = 4, b = pick(r, 1, 2), t = pick(r, 1, 6);
      const std::vector<std::size_t> kernels{3, 5};
      const bool split = fusion == Fusion::kMixupConv || fusion == Fusion::kConcat;
      std::vector<T> in{randn(r, {b, t, d}), randn(r, {d, bneck}, 0.5), randn(r, {bneck, d}, 0.5)};
      for (auto k : kernels) in.push_back(randn(r, {split ? bneck / kernels.size() : bneck, k}, 0.5));
      if (fusion == Fusion::kMixupConv) in.push_back(randn(r, {bneck, 3}, 0.5));
      if (fusion == Fusion::kWeightedSum) in.push_back(randn(r, {kernels.size()}, 0.5));
      const auto cfg = AdapterConfig::multiconv(kernels, bneck, fusion);
      return Case{in, nullptr, [cfg, fusion](G&, const std::vector<V>& v, Model<double>*) {
                    MultiConvVars<double> p{v[1], v[2], {v[3], v[4]}, std::nullopt, std::nullopt};
                    if (fusion == Fusion::kMixupConv) p.mix = v[5];
                    if (fusion == Fusion::kWeightedSum) p.alpha = v[5];
                    return std::vector<V>{multiconv_forward(v[0], p, cfg)};
                  }};
    });
  }
  add("mixup_fuse", [](SplitRng& r) {
    const std::size_t c = pick(r, 1, 4);
    return Case{{randn(r, {pick(r, 1, 2), c, pick(r, 1, 6)}), randn(r, {c, 3})}, nullptr,
                [](G&, const std::vector<V>& v, Model<double>*) { return std::vector<V>{mixup_fuse(v[0], v[1])}; }};
  });
  add("houlsby", [](SplitRng& r) {
    const std::size_t d = pick(r, 2, 5), bneck = pick(r, 1, 3);
    std::vector<T> in{randn(r, {pick(r, 1, 2), pick(r, 1, 4), d}), randn(r, {d}), randn(r, {d}),
                      randn(r, {d, bneck}), randn(r, {bneck}), randn(r, {bneck, d}), randn(r, {d})};
    return Case{in, nullptr, [](G&, const std::vector<V>& v, Model<double>*) {
                  HoulsbyVars<double> p{v[1], v[2], v[3], v[4], v[5], v[6]};
                  return std::vector<V>{houlsby_forward(v[0], p)};
                }};
  });
  add("lora", [](SplitRng& r) {
    const std::size_t i = pick(r, 2, 5), o = pick(r, 2, 5), rank = pick(r, 1, 2);
    std::vector<T> in{randn(r, {pick(r, 1, 2), pick(r, 1, 3), i}), randn(r, {i, o}), randn(r, {o}),
                      randn(r, {i, rank}), randn(r, {rank, o})};
    return Case{in, nullptr, [](G&, const std::vector<V>& v, Model<double>*) {
                  return std::vector<V>{lora_linear(v[0], v[1], &v[2], v[3], v[4])};
                }};
  });
  add("prompt", [](SplitRng& r) {
    const std::size_t d = pick(r, 1, 4);
    return Case{{randn(r, {pick(r, 1, 2), pick(r, 1, 4), d}), randn(r, {pick(r, 1, 3), d})}, nullptr,
                [](G&, const std::vector<V>& v, Model<double>*) { return std::vector<V>{prompt_prepend(v[0], v[1])}; }};
  });

  for (auto fusion : {Fusion::kMixupConv, Fusion::kConcat, Fusion::kSum, Fusion::kWeightedSum}) {
    add("encoder_multiconv_" + std::string(to_string(fusion)),
        [fusion](SplitRng& r) { return encoder_case(r, tiny_multiconv(fusion), TrainMode::kPeft); });
  }
  add("encoder_multiconv_no_kernels",
      [](SplitRng& r) { return encoder_case(r, tiny_multiconv(Fusion::kMixupConv, {}), TrainMode::kPeft); });
  add("encoder_houlsby", [](SplitRng& r) {
    auto a = AdapterConfig::houlsby(3);
    a.placement = Placement::kBoth;
    return encoder_case(r, a, TrainMode::kPeft);
  });
  add("encoder_lora", [](SplitRng& r) { return encoder_case(r, AdapterConfig::lora(2), TrainMode::kPeft); });
  add("encoder_bitfit", [](SplitRng& r) { return encoder_case(r, AdapterConfig::bitfit(), TrainMode::kPeft); });
  add("encoder_prompt", [](SplitRng& r) { return encoder_case(r, AdapterConfig::prompt(2), TrainMode::kPeft); });
  return out;
}

struct Evaluation {
  double loss = 0.0;
  std::vector<T> input_grads;
};

// Projects every output onto fixed random weights so no gradient component
// cancels by symmetry (a plain sum zeroes softmax gradients).
Evaluation evaluate(Case& c, const std::vector<T>& weights, bool backward) {
  G g;
  std::vector<V> in;
  for (const auto& t : c.inputs) in.push_back(g.input(t, true));
  const auto outs = c.fn(g, in, c.model.get());
  V loss = ad::sum(ad::mul(outs[0], g.input(weights[0])));
  for (std::size_t i = 1; i < outs.size(); ++i) loss = ad::add(loss, ad::sum(ad::mul(outs[i], g.input(weights[i]))));
  Evaluation e;
  e.loss = g.value(loss).item();
  if (backward) {
    if (c.model) c.model->params.zero_grad();
    g.backward(loss);
    for (const auto& v : in) {
      const auto& grad = g.grad(v);
      e.input_grads.push_back(grad ? *grad : T(g.value(v).shape()));
    }
  }
  return e;
}

std::vector<T> projection_weights(Case& c, SplitRng& r) {
  G g;
  std::vector<V> in;
  for (const auto& t : c.inputs) in.push_back(g.input(t));
  std::vector<T> w;
  for (const auto& o : c.fn(g, in, c.model.get())) w.push_back(randn(r, g.value(o).shape()));
  return w;
}

// Returns the worst relative error over the sampled coordinates.
double check_case(Case c, SplitRng& r, std::size_t& coordinates) {
  const auto weights = projection_weights(c, r);
  const auto base = evaluate(c, weights, true);
  struct Coord {
    double* value;
    double analytic;
  };
  std::vector<Coord> coords;
  for (std::size_t i = 0; i < c.inputs.size(); ++i) {
    for (std::size_t j = 0; j < c.inputs[i].size(); ++j) coords.push_back({&c.inputs[i][j], base.input_grads[i][j]});
  }
  if (c.model) {
    for (auto& p : c.model->params) {
      if (!p.trainable) continue;
      for (std::size_t j = 0; j < p.value.size(); ++j) {
        coords.push_back({&p.value[j], p.grad ? (*p.grad)[j] : 0.0});
      }
    }
  }
  if (coords.size() > kMaxCoordinates) {
    std::span<Coord> all(coords);
    shuffle(all, r);
    coords.resize(kMaxCoordinates);
  }
  double worst = 0.0;
  for (auto& co : coords) {
    const double saved = *co.value;
    *co.value = saved + kGradcheckEpsilon;
    const double up = evaluate(c, weights, false).loss;
    *co.value = saved - kGradcheckEpsilon;
    const double down = evaluate(c, weights, false).loss;
    *co.value = saved;
    const double numeric = (up - down) / (2.0 * kGradcheckEpsilon);
    worst = std::max(worst, gradcheck_relative_error(co.analytic, numeric));
  }
  coordinates += coords.size();
  return worst;
}

}  // namespace

double gradcheck_relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradcheckFloor});
  return std::abs(analytic - numeric) / denom;
}

std::vector<std::string> gradcheck_names() {
  std::vector<std::string> names;
  for (const auto& [name, b] : registry()) names.push_back(name);
  return names;
}

GradcheckResult run_gradcheck(std::string_view name, std::size_t trials, std::uint64_t seed) {
  for (const auto& [n, build] : registry()) {
    if (n != name) continue;
    GradcheckResult res{n, trials, 0, 0.0};
    const SplitRng root = SplitRng(seed).child("gradcheck").child(n);
    for (std::size_t t = 0; t < trials; ++t) {
      SplitRng r = root.child(t);
      res.max_rel_error = std::max(res.max_rel_error, check_case(build(r), r, res.coordinates));
    }
    return res;
  }
  throw ConfigError("unknown gradcheck target '" + std::string(name) + "'");
}

std::vector<GradcheckResult> run_all_gradchecks(std::size_t trials, std::uint64_t seed) {
  std::vector<GradcheckResult> out;
  for (const auto& name : gradcheck_names()) out.push_back(run_gradcheck(name, trials, seed));
  return out;
}

}  // namespace adaptlab
