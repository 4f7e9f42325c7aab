// One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.
// `--known-red N` (repeatable) names a criterion whose failure is documented
// as unattainable: it still prints FAIL but does not set the exit status.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "adaptlab/audit.hpp"
#include "adaptlab/encoder.hpp"
#include "adaptlab/gradcheck.hpp"
#include "adaptlab/model.hpp"
#include "adaptlab/optim.hpp"
#include "adaptlab/train.hpp"
#include "test_util.hpp"

using namespace adaptlab;
using adaptlab::testing::randn;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome parameter_concordance() {
  const auto t0 = Clock::now();
  const std::uint64_t exact[] = {0, 30720, 270336, 3145728, 6441984, 3168768};
  const double tol[] = {0.0, 0.03, 0.05, 0.002, 0.001, 0.001};
  const auto table = audit_table(EncoderConfig::xlsr());
  bool ok = table.rows.size() == 6;
  std::string detail;
  for (std::size_t i = 0; ok && i < 6; ++i) {
    const auto& r = table.rows[i];
    const auto dev = r.relative_deviation();
    ok = ok && r.closed_form_count == exact[i] && r.introspected_count == exact[i] && dev && *dev <= tol[i];
    detail += fmt("%s=%llu(%.4f) ", r.method.c_str(), static_cast<unsigned long long>(r.closed_form_count),
                  dev ? *dev : -1.0);
  }
  const double secs = seconds_since(t0);
  return {ok && secs < 1.0, detail + fmt("in %.3fs", secs)};
}

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  const auto results = run_all_gradchecks(kGradcheckMinTrials, 0);
  double worst = 0.0;
  std::string worst_name, failed;
  bool ok = results.size() == gradcheck_names().size();
  for (const auto& r : results) {
    ok = ok && r.passed() && r.trials >= kGradcheckMinTrials;
    if (!r.passed()) failed += r.name + ' ';
    if (r.max_rel_error >= worst) worst = r.max_rel_error, worst_name = r.name;
  }
  const double secs = seconds_since(t0);
  return {ok && secs < 120.0, fmt("%zu targets x %zu trials, worst %.2e (%s) %sin %.1fs", results.size(),
                                  kGradcheckMinTrials, worst, worst_name.c_str(),
                                  failed.empty() ? "" : ("failed: " + failed).c_str(), secs)};
}

Outcome oracle_equivalences() {
  SplitRng r(303);
  double conv_err = 0, eer_err = 0, mhsa_err = 0;
  for (int c = 0; c < 100; ++c) {
    const std::size_t B = 1 + r.uniform_int(0, 2), C = 1 + r.uniform_int(0, 6), T = 1 + r.uniform_int(0, 40);
    const std::size_t k = 2 * r.uniform_int(0, 12) + 1;
    const auto x = randn(r, {B, C, T}), w = randn(r, {C, k});
    ad::Graph<double> g;
    const auto y = ad::depthwise_conv1d(g.input(x), g.input(w)).value();
    const auto ref = adaptlab::testing::direct_conv(x, w);
    for (std::size_t i = 0; i < ref.size(); ++i) conv_err = std::max(conv_err, std::abs(y[i] - ref[i]));
  }
  for (int s = 0; s < 100; ++s) {
    ScoreSet set;
    const std::size_t nb = 1 + r.uniform_int(0, 300), ns = 1 + r.uniform_int(0, 300);
    const double shift = r.uniform(-1.0, 3.0), grid = s % 2 ? 0.0 : r.uniform(0.05, 0.5);
    auto draw = [&](double mean) {
      const double v = r.normal() + mean;
      return grid > 0 ? std::round(v / grid) * grid : v;
    };
    for (std::size_t i = 0; i < nb; ++i) set.push_back({Label::kBonafide, draw(shift)});
    for (std::size_t i = 0; i < ns; ++i) set.push_back({Label::kSpoof, draw(0.0)});
    eer_err = std::max(eer_err, std::abs(compute_eer(set).eer_percent - adaptlab::testing::brute_force_eer(set)));
  }
  EncoderConfig enc = EncoderConfig::toy();
  enc.num_layers = 1;
  for (int s = 0; s < 10; ++s) {
    auto m = build_model<double>(enc, AdapterConfig::none(), TrainMode::kPeft, static_cast<std::uint64_t>(s));
    const auto x = randn(r, {1, static_cast<std::size_t>(1 + r.uniform_int(0, 12)), enc.model_dim});
    ad::Graph<double> g;
    const auto y = mhsa(bind_attention<double>(g, m.params, 0, nullptr), g.input(x), enc.num_heads).value();
    const auto ref = adaptlab::testing::per_head_mhsa(x, m.params, enc.num_heads);
    for (std::size_t i = 0; i < ref.size(); ++i) mhsa_err = std::max(mhsa_err, std::abs(y[i] - ref[i]));
  }
  return {conv_err <= 1e-6 && eer_err <= 1e-9 && mhsa_err <= 1e-5,
          fmt("conv max err %.1e (100 cases), eer max err %.1e (100 sets), mhsa max err %.1e", conv_err, eer_err,
              mhsa_err)};
}

Outcome transparency() {
  const auto enc = EncoderConfig::toy();
  std::vector<AdapterConfig> variants{AdapterConfig::houlsby(16), AdapterConfig::lora(4), AdapterConfig::bitfit(),
                                      AdapterConfig::multiconv({}, 16)};
  for (auto f : {Fusion::kMixupConv, Fusion::kSum, Fusion::kWeightedSum, Fusion::kConcat}) {
    for (auto p : {Placement::kMhsa, Placement::kFfn, Placement::kBoth}) {
      variants.push_back(AdapterConfig::multiconv({3, 7, 15, 23}, 16, f, p));
    }
  }
  auto plain = build_model<float>(enc, AdapterConfig::none(), TrainMode::kPeft, 11);
  SplitRng r(404);
  std::size_t checked = 0;
  for (const auto& a : variants) {
    auto adapted = build_model<float>(enc, a, TrainMode::kPeft, 11);
    auto bank = adapted.bank();
    for (int i = 0; i < 10; ++i) {
      const auto x = randn<float>(r, {2, static_cast<std::size_t>(1 + r.uniform_int(0, 59)), enc.input_dim});
      ad::Graph<float> g0, g1;
      const auto y0 = encoder_forward<float>(enc, plain.params, g0.input(x), nullptr).value();
      const auto y1 = encoder_forward(enc, adapted.params, g1.input(x), bank ? &*bank : nullptr).value();
      if (!bit_identical(y0, y1)) {
        return {false, fmt("%s (%s, %s) differs on input %d", std::string(to_string(a.variant)).c_str(),
                           std::string(to_string(a.fusion)).c_str(), std::string(to_string(a.placement)).c_str(), i)};
      }
      ++checked;
    }
  }
  return {true, fmt("%zu adapter configurations x 10 inputs bit-identical (%zu forwards)", variants.size(), checked)};
}

Outcome freezing() {
  CorpusSpec spec;
  spec.num_records = 64;
  spec.num_frames = 40;
  const auto corpus = generate(spec);
  std::size_t frozen_checked = 0;
  for (const auto& a : {AdapterConfig::multiconv({3, 7, 15, 23}, 16), AdapterConfig::houlsby(16),
                        AdapterConfig::lora(4), AdapterConfig::bitfit(), AdapterConfig::prompt(4)}) {
    auto m = build_model<float>(EncoderConfig::toy(), a, TrainMode::kPeft, 5);
    const auto initial = m.params;
    Adam<float> adam(TrainConfig::toy().adam());
    const std::size_t T = corpus.num_frames, F = corpus.num_features;
    for (std::size_t step = 0; step < 100; ++step) {
      Tensor<float> x({4, T, F});
      std::vector<int> labels;
      for (std::size_t b = 0; b < 4; ++b) {
        const auto& rec = corpus.records[(4 * step + b) % corpus.records.size()];
        std::copy(rec.features.data().begin(), rec.features.data().end(), x.data().begin() + b * T * F);
        labels.push_back(static_cast<int>(rec.label));
      }
      m.params.zero_grad();
      ad::Graph<float> g;
      const auto loss = ad::cross_entropy(forward_logits(g, m, x), std::span<const int>(labels));
      g.backward(loss);
      adam.step(m.params);
    }
    bool moved = false;
    for (const auto& p : m.params) {
      const bool same = bit_identical(p.value, initial.at(p.name).value);
      if (!p.trainable && !same) return {false, p.name + " changed under " + std::string(to_string(a.variant))};
      frozen_checked += !p.trainable;
      moved = moved || (p.trainable && !same);
    }
    if (!moved) return {false, "no trainable parameter moved under " + std::string(to_string(a.variant))};
  }
  return {true, fmt("5 methods x 100 steps, %zu frozen tensors bit-identical", frozen_checked)};
}

struct RunResult {
  double best_eer = 0.0;
  std::size_t best_epoch = 0;
  double seconds = 0.0;
};

RunResult train_run(const Corpus& corpus, const AdapterConfig& a, TrainMode mode, std::uint64_t seed) {
  auto cfg = TrainConfig::toy();
  cfg.seed = seed;
  cfg.mode = mode;
  auto m = build_model<float>(EncoderConfig::toy(), a, mode, seed);
  const auto t0 = Clock::now();
  const auto res = train(m, corpus, cfg);
  return {res.best_dev_eer, res.best_epoch, seconds_since(t0)};
}

AdapterConfig kernels(std::vector<std::size_t> k) { return AdapterConfig::multiconv(std::move(k), 16); }

Outcome toy_learning(const Corpus& corpus, RunResult& k4_seed0) {
  k4_seed0 = train_run(corpus, kernels({3, 7, 15, 23}), TrainMode::kPeft, 0);
  const auto frozen = train_run(corpus, AdapterConfig::none(), TrainMode::kFrozenOnly, 0);
  const double secs = k4_seed0.seconds + frozen.seconds;
  return {k4_seed0.best_eer < 10.0 && frozen.best_eer >= 45.0 && frozen.best_eer <= 55.0 && secs <= 600.0,
          fmt("K={3,7,15,23} best dev EER %.2f%% (epoch %zu, %zu epochs), frozen_only %.2f%%, %.0fs",
              k4_seed0.best_eer, k4_seed0.best_epoch, TrainConfig::toy().epochs, frozen.best_eer, secs)};
}

Outcome multiscale_direction(const Corpus& corpus, const RunResult& k4_seed0) {
  double mean[3] = {k4_seed0.best_eer, 0.0, 0.0};
  std::string per_seed[3] = {fmt("%.2f", k4_seed0.best_eer), "", ""};
  const AdapterConfig configs[3] = {kernels({3, 7, 15, 23}), kernels({3}), kernels({})};
  for (int c = 0; c < 3; ++c) {
    for (std::uint64_t s = c == 0 ? 1 : 0; s < 3; ++s) {
      const double e = train_run(corpus, configs[c], TrainMode::kPeft, s).best_eer;
      mean[c] += e;
      per_seed[c] += fmt("%s%.2f", per_seed[c].empty() ? "" : "/", e);
    }
    mean[c] /= 3.0;
  }
  return {mean[0] <= mean[1] && mean[0] <= mean[2],
          fmt("mean dev EER K={3,7,15,23} %.2f%% [%s], K={3} %.2f%% [%s], K={} %.2f%% [%s]", mean[0],
              per_seed[0].c_str(), mean[1], per_seed[1].c_str(), mean[2], per_seed[2].c_str())};
}

std::string corpus_bytes(const Corpus& c) {
  std::ostringstream out;
  write_corpus(c, out);
  return out.str();
}

Outcome determinism() {
  CorpusSpec spec;
  spec.num_records = 200;
  spec.num_frames = 60;
  const auto corpus = generate(spec);
  auto run = [&] {
    auto cfg = TrainConfig::toy();
    cfg.epochs = 3;
    cfg.seed = 9;
    auto m = build_model<float>(EncoderConfig::toy(), kernels({3, 7, 15, 23}), TrainMode::kPeft, cfg.seed);
    const auto res = train(m, corpus, cfg);
    std::vector<std::size_t> all(corpus.records.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return std::pair{training_log_csv(res.log), scores_csv(score_records(m, corpus, all))};
  };
  const auto a = run(), b = run();
  CorpusSpec full;
  const auto one = corpus_bytes(generate(full, 1)), many = corpus_bytes(generate(full, 4));
  return {a == b && one == many,
          fmt("log CSV %s, score CSV %s, corpus 1 vs 4 workers %s (%zu bytes)", a.first == b.first ? "equal" : "DIFFER",
              a.second == b.second ? "equal" : "DIFFER", one == many ? "equal" : "DIFFER", one.size())};
}

Outcome round_trips() {
  auto m = build_model<float>(EncoderConfig::toy(), kernels({3, 7, 15, 23}), TrainMode::kPeft, 2);
  SplitRng r(505);
  for (auto& p : m.params) {
    for (auto& v : p.value.data()) v = static_cast<float>(r.normal());
  }
  std::ostringstream c1, c2;
  write_checkpoint(m.params, c1);
  std::istringstream cin(c1.str());
  write_checkpoint(read_checkpoint<float>(cin), c2);
  CorpusSpec spec;
  spec.num_records = 100;
  const auto first = corpus_bytes(generate(spec));
  std::istringstream in(first);
  const auto second = corpus_bytes(read_corpus(in));
  return {c1.str() == c2.str() && first == second,
          fmt("checkpoint %zu bytes %s, corpus %zu bytes %s", c1.str().size(),
              c1.str() == c2.str() ? "identical" : "DIFFER", first.size(), first == second ? "identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> known_red;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--known-red") == 0 && i + 1 < argc) {
      known_red.insert(std::atoi(argv[++i]));
    } else {
      std::fprintf(stderr, "usage: acceptance [--known-red N]...\n");
      return 2;
    }
  }

  bool ok = true;
  auto report = [&](int n, const char* name, const std::function<Outcome()>& f) {
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const bool tolerated = !o.pass && known_red.contains(n);
    std::printf("criterion %d %-26s %s  %s%s\n", n, name, o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                tolerated ? "  [known red]" : "");
    std::fflush(stdout);
    ok = ok && (o.pass || tolerated);
  };

  report(1, "parameter concordance", parameter_concordance);
  report(2, "gradient correctness", gradient_correctness);
  report(3, "oracle equivalences", oracle_equivalences);
  report(4, "transparency", transparency);
  report(5, "freezing", freezing);
  CorpusSpec spec;
  const auto corpus = generate(spec);
  RunResult k4_seed0;
  report(6, "toy-task learning", [&] { return toy_learning(corpus, k4_seed0); });
  report(7, "multi-scale direction", [&] { return multiscale_direction(corpus, k4_seed0); });
  report(8, "determinism", determinism);
  report(9, "round trips", round_trips);
  return ok ? 0 : 1;
}
