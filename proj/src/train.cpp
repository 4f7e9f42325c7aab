#include "adaptlab/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "adaptlab/audit.hpp"
#include "adaptlab/errors.hpp"
#include "adaptlab/split_rng.hpp"

namespace adaptlab {

namespace {

constexpr std::uint64_t kSplitSalt = 0x5D1F7A3C2B9E4F61ULL;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename S>
Tensor<S> gather_batch(const Corpus& corpus, const std::vector<std::size_t>& indices, std::size_t begin,
                       std::size_t end, std::vector<int>* labels) {
  const std::size_t T = corpus.num_frames, F = corpus.num_features, B = end - begin;
  Tensor<S> x({B, T, F});
  auto out = x.data();
  for (std::size_t b = 0; b < B; ++b) {
    const auto& rec = corpus.records[indices[begin + b]];
    const auto src = rec.features.data();
    std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(b * T * F));
    if (labels) labels->push_back(static_cast<int>(rec.label));
  }
  return x;
}

// Activations are tens of MB per step; keeping freed blocks in the heap avoids
// an mmap/munmap and page-fault storm on every batch.
void retain_large_allocations() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)once;
#endif
}

}  // namespace

void TrainConfig::validate() const {
  adam().validate();
  if (epochs == 0) throw ConfigError("epochs must be > 0");
  if (batch_size == 0) throw ConfigError("batch_size must be > 0");
}

TrainConfig TrainConfig::toy() { return TrainConfig{}; }

TrainConfig TrainConfig::reference() {
  TrainConfig c;
  c.lr = 1e-5;
  c.batch_size = 14;
  c.epochs = 50;
  return c;
}

TrainConfig TrainConfig::preset(const std::string& name) {
  if (name == "toy") return toy();
  if (name == "reference") return reference();
  throw ConfigError("unknown train preset '" + name + "' (expected toy or reference)");
}

bool is_dev_record(std::uint32_t id) { return mix64(static_cast<std::uint64_t>(id) ^ kSplitSalt) % 5 == 0; }

CorpusSplit split_corpus(const Corpus& corpus) {
  CorpusSplit split;
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    (is_dev_record(corpus.records[i].id) ? split.dev : split.train).push_back(i);
  }
  return split;
}

double record_loss(double logit0, double logit1, Label label) {
  const double m = std::max(logit0, logit1);
  const double lse = m + std::log(std::exp(logit0 - m) + std::exp(logit1 - m));
  return lse - (label == Label::kBonafide ? logit0 : logit1);
}

template <typename S>
std::vector<RecordScore> score_records(Model<S>& model, const Corpus& corpus,
                                       const std::vector<std::size_t>& indices, std::size_t batch_size) {
  std::vector<RecordScore> out;
  out.reserve(indices.size());
  for (std::size_t begin = 0; begin < indices.size(); begin += batch_size) {
    const std::size_t end = std::min(indices.size(), begin + batch_size);
    ad::Graph<S> g;
    const auto logits = forward_logits(g, model, gather_batch<S>(corpus, indices, begin, end, nullptr));
    const auto scores = detection_scores(logits.value());
    for (std::size_t b = 0; b < end - begin; ++b) {
      const auto& rec = corpus.records[indices[begin + b]];
      out.push_back({rec.id, rec.label, scores[b]});
    }
  }
  return out;
}

ScoreSet to_score_set(const std::vector<RecordScore>& scores) {
  ScoreSet set;
  set.reserve(scores.size());
  for (const auto& s : scores) set.push_back({s.label, s.score});
  return set;
}

template <typename S>
TrainResult<S> train(Model<S>& model, const Corpus& corpus, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  retain_large_allocations();
  if (corpus.num_features != model.encoder.input_dim) {
    throw ConfigError("corpus has " + std::to_string(corpus.num_features) + " features, encoder expects " +
                      std::to_string(model.encoder.input_dim));
  }
  const CorpusSplit split = split_corpus(corpus);
  if (split.train.empty() || split.dev.empty()) throw ConfigError("corpus too small for an 80/20 split");

  Adam<S> adam(cfg.adam());
  const SplitRng shuffle_root = SplitRng(cfg.seed).child("shuffle");
  std::vector<double> loss_of(corpus.records.size(), 0.0);
  TrainResult<S> result;
  std::optional<double> best;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = split.train;
    SplitRng rng = shuffle_root.child(epoch);
    shuffle(std::span(order), rng);

    for (std::size_t begin = 0, batch = 0; begin < order.size(); begin += cfg.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      std::vector<int> labels;
      const auto x = gather_batch<S>(corpus, order, begin, end, &labels);
      model.params.zero_grad();
      ad::Graph<S> g;
      const auto logits = forward_logits(g, model, x);
      const auto loss = ad::cross_entropy(logits, std::span<const int>(labels));
      if (!std::isfinite(static_cast<double>(loss.value().item()))) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch));
      }
      const auto& lv = logits.value();
      for (std::size_t b = 0; b < end - begin; ++b) {
        loss_of[order[begin + b]] = record_loss(static_cast<double>(lv[2 * b]), static_cast<double>(lv[2 * b + 1]),
                                                static_cast<Label>(labels[b]));
      }
      if (g.requires_grad(loss)) {
        g.backward(loss);
        adam.step(model.params);
      }
    }

    // Summed in split order so the epoch loss does not depend on the shuffle.
    double total = 0.0;
    for (std::size_t i : split.train) total += loss_of[i];
    EpochLog entry{epoch, total / static_cast<double>(split.train.size()), 0.0};
    entry.dev_eer = compute_eer(to_score_set(score_records(model, corpus, split.dev))).eer_percent;
    result.log.push_back(entry);
    if (!best || entry.dev_eer < *best) {
      best = entry.dev_eer;
      result.best_epoch = epoch;
      result.best_params = model.params;
    }
    if (on_epoch) on_epoch(entry);
  }
  model.params.zero_grad();
  result.best_params.zero_grad();
  result.best_dev_eer = *best;
  load_values(model.params, result.best_params);
  return result;
}

std::string training_log_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,train_loss,dev_eer\n";
  for (const auto& e : log) out += std::to_string(e.epoch) + ',' + fmt(e.train_loss) + ',' + fmt(e.dev_eer) + '\n';
  return out;
}

std::string scores_csv(const std::vector<RecordScore>& scores) {
  std::string out = "record_id,label,score\n";
  for (const auto& s : scores) {
    out += std::to_string(s.id) + ',' + (s.label == Label::kBonafide ? "bonafide" : "spoof") + ',' + fmt(s.score) +
           '\n';
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::kIo, "cannot open " + path + " for writing");
  out << text;
  if (!out) throw FormatError(FormatError::Kind::kIo, "failed writing " + path);
}

std::string_view to_string(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::kKernels: return "kernels";
    case AblationAxis::kAggregation: return "aggregation";
    case AblationAxis::kPlacement: return "placement";
    case AblationAxis::kMethod: return "method";
  }
  return "?";
}

AblationAxis parse_ablation_axis(std::string_view name) {
  for (auto a : {AblationAxis::kKernels, AblationAxis::kAggregation, AblationAxis::kPlacement, AblationAxis::kMethod}) {
    if (name == to_string(a)) return a;
  }
  throw ConfigError("unknown ablation axis '" + std::string(name) +
                    "' (expected kernels, aggregation, placement, method)");
}

namespace {

std::string kernels_label(const std::vector<std::size_t>& k) {
  if (k.empty()) return "{}";
  std::string s = "{";
  for (std::size_t i = 0; i < k.size(); ++i) s += (i ? ";" : "") + std::to_string(k[i]);
  return s + "}";
}

}  // namespace

std::vector<AblationPoint> default_grid(AblationAxis axis, const AdapterConfig& base) {
  std::vector<AblationPoint> grid;
  AdapterConfig mc = base;
  mc.variant = AdapterVariant::kMultiConv;
  switch (axis) {
    case AblationAxis::kKernels:
      for (const std::vector<std::size_t>& k : std::vector<std::vector<std::size_t>>{
               {}, {3}, {15}, {3, 23}, {3, 7, 15, 23}}) {
        auto a = mc;
        a.kernels = k;
        grid.push_back({kernels_label(k), a});
      }
      break;
    case AblationAxis::kAggregation:
      for (auto f : {Fusion::kMixupConv, Fusion::kSum, Fusion::kWeightedSum, Fusion::kConcat}) {
        auto a = mc;
        a.fusion = f;
        grid.push_back({std::string(to_string(f)), a});
      }
      break;
    case AblationAxis::kPlacement:
      for (auto p : {Placement::kMhsa, Placement::kFfn, Placement::kBoth}) {
        auto a = mc;
        a.placement = p;
        grid.push_back({std::string(to_string(p)), a});
      }
      break;
    case AblationAxis::kMethod:
      for (auto v : {AdapterVariant::kMultiConv, AdapterVariant::kLoRA, AdapterVariant::kHoulsby,
                     AdapterVariant::kBitFit, AdapterVariant::kPrompt, AdapterVariant::kNone}) {
        auto a = base;
        a.variant = v;
        if (v == AdapterVariant::kHoulsby) a.placement = Placement::kBoth;
        if (v == AdapterVariant::kMultiConv) a = mc;
        grid.push_back({std::string(to_string(v)), a});
      }
      break;
  }
  return grid;
}

std::vector<AblationSummary> AblationResult::summary() const {
  std::vector<AblationSummary> rows;
  for (const auto& r : runs) {
    if (rows.empty() || rows.back().config_id != r.config_id) {
      rows.push_back({r.config_id, r.axis_value, 0, 0.0, 0.0, r.params});
    }
  }
  for (auto& row : rows) {
    std::vector<double> eers;
    for (const auto& r : runs) {
      if (r.config_id == row.config_id && r.eer) eers.push_back(*r.eer);
    }
    row.completed = eers.size();
    if (eers.empty()) continue;
    double sum = 0.0;
    for (double e : eers) sum += e;
    row.mean_eer = sum / static_cast<double>(eers.size());
    if (eers.size() > 1) {
      double ss = 0.0;
      for (double e : eers) ss += (e - row.mean_eer) * (e - row.mean_eer);
      row.std_eer = std::sqrt(ss / static_cast<double>(eers.size() - 1));
    }
  }
  return rows;
}

std::string AblationResult::runs_csv() const {
  std::string out = "config_id,axis_value,seed,eer,params\n";
  for (const auto& r : runs) {
    out += std::to_string(r.config_id) + ',' + r.axis_value + ',' + std::to_string(r.seed) + ',' +
           (r.eer ? fmt(*r.eer) : std::string()) + ',' + std::to_string(r.params) + '\n';
  }
  return out;
}

std::string AblationResult::summary_csv() const {
  std::string out = "config_id,axis_value,runs,mean_eer,std_eer,params\n";
  for (const auto& s : summary()) {
    out += std::to_string(s.config_id) + ',' + s.axis_value + ',' + std::to_string(s.completed) + ',' +
           (s.completed ? fmt(s.mean_eer) : std::string()) + ',' + (s.completed ? fmt(s.std_eer) : std::string()) +
           ',' + std::to_string(s.params) + '\n';
  }
  return out;
}

AblationResult run_ablation(AblationAxis axis, const std::vector<AblationPoint>& grid, const EncoderConfig& enc,
                            const TrainConfig& base, const Corpus& corpus, std::size_t seeds,
                            std::size_t threads) {
  if (seeds == 0) throw ConfigError("ablation needs at least one seed");
  base.validate();
  AblationResult result;
  result.axis = axis;
  for (std::size_t c = 0; c < grid.size(); ++c) {
    for (std::size_t s = 0; s < seeds; ++s) {
      result.runs.push_back({c, grid[c].axis_value, base.seed + s, std::nullopt, 0, {}});
    }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < result.runs.size(); j = next++) {
      AblationRun& run = result.runs[j];
      try {
        const AdapterConfig& adapter = grid[run.config_id].adapter;
        run.params = audit(enc, adapter).closed_form_count;
        TrainConfig cfg = base;
        cfg.seed = run.seed;
        auto model = build_model<float>(enc, adapter, cfg.mode, cfg.seed);
        run.eer = train(model, corpus, cfg).best_dev_eer;
      } catch (const std::exception& e) {
        run.error = e.what();
      }
    }
  };
  const std::size_t n = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, result.runs.size()));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
  }
  return result;
}

std::size_t ablation_threads() {
  if (const char* env = std::getenv("ADAPTLAB_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

template TrainResult<float> train(Model<float>&, const Corpus&, const TrainConfig&, const EpochCallback&);
template TrainResult<double> train(Model<double>&, const Corpus&, const TrainConfig&, const EpochCallback&);
template std::vector<RecordScore> score_records(Model<float>&, const Corpus&, const std::vector<std::size_t>&,
                                                std::size_t);
template std::vector<RecordScore> score_records(Model<double>&, const Corpus&, const std::vector<std::size_t>&,
                                                std::size_t);

}  // namespace adaptlab
