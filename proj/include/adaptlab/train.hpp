#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "adaptlab/eer.hpp"
#include "adaptlab/model.hpp"
#include "adaptlab/optim.hpp"
#include "adaptlab/spoofbench.hpp"

namespace adaptlab {

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::kPeft;

  AdamOptions adam() const { return {lr, beta1, beta2, eps, weight_decay}; }
  // Throws ConfigError.
  void validate() const;

  static TrainConfig toy();
  // Reference schedule for a pretrained backbone: lr 1e-5, batch 14, 50 epochs.
  static TrainConfig reference();
  static TrainConfig preset(const std::string& name);
};

// Deterministic 80/20 split on a hash of the record id.
bool is_dev_record(std::uint32_t id);

struct CorpusSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> dev;
};

CorpusSplit split_corpus(const Corpus& corpus);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_eer = 0.0;
};

template <typename S>
struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_dev_eer = 0.0;
  ParamStore<S> best_params;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Trains on the train split and evaluates dev EER after every epoch. On
// return the model holds the parameters of the best-dev epoch (earliest on
// ties). Throws TrainingError on a non-finite batch loss.
template <typename S>
TrainResult<S> train(Model<S>& model, const Corpus& corpus, const TrainConfig& cfg,
                     const EpochCallback& on_epoch = {});

struct RecordScore {
  std::uint32_t id = 0;
  Label label = Label::kBonafide;
  double score = 0.0;
};

template <typename S>
std::vector<RecordScore> score_records(Model<S>& model, const Corpus& corpus,
                                       const std::vector<std::size_t>& indices, std::size_t batch_size = 64);

ScoreSet to_score_set(const std::vector<RecordScore>& scores);

// Mean cross-entropy of one record's [2] logits, in double.
double record_loss(double logit0, double logit1, Label label);

std::string training_log_csv(const std::vector<EpochLog>& log);
std::string scores_csv(const std::vector<RecordScore>& scores);
// Writes `text` to `path`, throwing FormatError on I/O failure.
void write_text_file(const std::string& path, const std::string& text);

enum class AblationAxis { kKernels, kAggregation, kPlacement, kMethod };

std::string_view to_string(AblationAxis axis);
AblationAxis parse_ablation_axis(std::string_view name);

struct AblationPoint {
  std::string axis_value;
  AdapterConfig adapter;
};

// The grid of one axis, varying only that axis of `base`.
std::vector<AblationPoint> default_grid(AblationAxis axis, const AdapterConfig& base);

struct AblationRun {
  std::size_t config_id = 0;
  std::string axis_value;
  std::uint64_t seed = 0;
  std::optional<double> eer;
  std::uint64_t params = 0;
  std::string error;
};

struct AblationSummary {
  std::size_t config_id = 0;
  std::string axis_value;
  std::size_t completed = 0;
  double mean_eer = 0.0;
  double std_eer = 0.0;
  std::uint64_t params = 0;
};

struct AblationResult {
  AblationAxis axis = AblationAxis::kKernels;
  std::vector<AblationRun> runs;

  std::vector<AblationSummary> summary() const;
  // config_id,axis_value,seed,eer,params (a failed run leaves eer empty).
  std::string runs_csv() const;
  // config_id,axis_value,runs,mean_eer,std_eer,params.
  std::string summary_csv() const;
};

// Trains every grid point under seeds base.seed .. base.seed + seeds - 1 and
// records the best dev EER. Runs execute on up to `threads` threads; a failing
// run is recorded and the grid continues.
AblationResult run_ablation(AblationAxis axis, const std::vector<AblationPoint>& grid, const EncoderConfig& enc,
                            const TrainConfig& base, const Corpus& corpus, std::size_t seeds,
                            std::size_t threads);

// Thread cap from ADAPTLAB_THREADS, else the hardware concurrency.
std::size_t ablation_threads();

}  // namespace adaptlab
