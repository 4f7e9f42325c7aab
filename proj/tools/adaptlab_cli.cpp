// adaptlab: corpus generation, training, evaluation, parameter audits,
// gradient checks and ablations driven by one config file.
//
// Exit status: 0 success, 1 validation error (bad flags, config, or
// arguments), 2 runtime failure (I/O, format, training).

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "adaptlab/audit.hpp"
#include "adaptlab/errors.hpp"
#include "adaptlab/experiment_config.hpp"
#include "adaptlab/gradcheck.hpp"
#include "adaptlab/model.hpp"
#include "adaptlab/param_store.hpp"
#include "adaptlab/spoofbench.hpp"
#include "adaptlab/train.hpp"

using namespace adaptlab;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct CommonFlags {
  std::string config;
  std::string preset = "toy";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> method;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "TOML-style experiment config");
  cmd->add_option("--preset", f.preset, "Base preset: toy or xlsr")->capture_default_str();
  cmd->add_option("--seed", f.seed, "Override the run seed");
  cmd->add_option("--method", f.method, "Adapter method: none, multiconv, houlsby, lora, bitfit, prompt");
}

// Preset, then config file, then flags.
ExperimentConfig resolve(const CommonFlags& f, bool seed_is_data) {
  ExperimentConfig c = ExperimentConfig::from_preset(f.preset);
  if (!f.config.empty()) c = load_experiment_config(f.config, c);
  if (f.method) c.adapter = c.method_defaults(*f.method);
  if (f.seed) (seed_is_data ? c.data.seed : c.train.seed) = *f.seed;
  c.validate();
  return c;
}

void print_resolved(const ExperimentConfig& c) { std::cout << "# resolved config\n" << c.resolved() << '\n'; }

Corpus load_corpus(const ExperimentConfig& c, const std::string& override_path) {
  const std::string path = override_path.empty() ? c.corpus_path : override_path;
  if (!path.empty()) {
    std::cout << "corpus: " << path << '\n';
    return read_corpus(path);
  }
  std::cout << "corpus: generated from [data]\n";
  return generate(c.data);
}

std::string group_thousands(std::uint64_t n) {
  std::string s = std::to_string(n);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

int cmd_gen_data(const CommonFlags& f, const std::string& out, std::size_t workers) {
  const auto c = resolve(f, true);
  print_resolved(c);
  const auto corpus = generate(c.data, workers);
  write_corpus(corpus, out);
  std::cout << "wrote " << corpus.records.size() << " records to " << out << '\n';
  return 0;
}

int cmd_train(const CommonFlags& f, const std::string& out, const std::string& corpus_path) {
  const auto c = resolve(f, false);
  print_resolved(c);
  const auto corpus = load_corpus(c, corpus_path);
  auto model = build_model<float>(c.encoder, c.adapter, c.train.mode, c.train.seed);
  const auto result = train(model, corpus, c.train, [](const EpochLog& e) {
    std::printf("epoch %3zu  train_loss %.6f  dev_eer %.3f%%\n", e.epoch, e.train_loss, e.dev_eer);
    std::fflush(stdout);
  });
  std::filesystem::create_directories(out);
  const auto dir = std::filesystem::path(out);
  write_checkpoint(model.params, (dir / "checkpoint.bin").string());
  write_text_file((dir / "training_log.csv").string(), training_log_csv(result.log));
  write_text_file((dir / "config.toml").string(), c.resolved());
  std::printf("best dev EER %.3f%% at epoch %zu; outputs in %s\n", result.best_dev_eer, result.best_epoch,
              out.c_str());
  return 0;
}

int cmd_eval(const CommonFlags& f, const std::string& checkpoint, const std::string& corpus_path,
             const std::string& out, const std::string& split_name) {
  const auto c = resolve(f, false);
  print_resolved(c);
  const auto corpus = load_corpus(c, corpus_path);
  auto model = build_model<float>(c.encoder, c.adapter, c.train.mode, c.train.seed);
  load_values(model.params, read_checkpoint<float>(checkpoint));
  const auto split = split_corpus(corpus);
  std::vector<std::size_t> indices;
  if (split_name == "dev") {
    indices = split.dev;
  } else if (split_name == "train") {
    indices = split.train;
  } else {
    for (std::size_t i = 0; i < corpus.records.size(); ++i) indices.push_back(i);
  }
  const auto scores = score_records(model, corpus, indices);
  const auto r = compute_eer(to_score_set(scores));
  std::printf("split %s: EER %.4f%%  threshold %.6g  bonafide %zu  spoof %zu\n", split_name.c_str(), r.eer_percent,
              r.threshold_at_eer, r.num_bonafide, r.num_spoof);
  if (!out.empty()) {
    write_text_file(out, scores_csv(scores));
    std::cout << "scores written to " << out << '\n';
  }
  return 0;
}

int cmd_count_params(const CommonFlags& f, const std::string& out) {
  ExperimentConfig c = ExperimentConfig::from_preset(f.preset);
  if (!f.config.empty()) c = load_experiment_config(f.config, c);
  c.encoder.validate();
  AuditTable table;
  if (f.method) {
    const auto report = audit(c.encoder, c.method_defaults(*f.method));
    std::cout << report.method << " trainable parameters: " << group_thousands(report.closed_form_count) << '\n';
    table.rows.push_back(report);
  } else if (!f.config.empty()) {
    table.rows.push_back(audit(c.encoder, c.adapter));
  } else {
    table = audit_table(c.encoder);
  }
  std::cout << table.text();
  if (!out.empty()) write_text_file(out, table.csv());
  return 0;
}

int cmd_ablate(const CommonFlags& f, const std::string& axis_name, std::size_t seeds, const std::string& out) {
  const auto c = resolve(f, false);
  print_resolved(c);
  const auto axis = parse_ablation_axis(axis_name);
  const auto corpus = load_corpus(c, "");
  const auto grid = default_grid(axis, c.adapter);
  const auto result = run_ablation(axis, grid, c.encoder, c.train, corpus, seeds, ablation_threads());
  const auto summary = result.summary_csv();
  std::cout << summary;
  if (!out.empty()) {
    write_text_file(out, result.runs_csv());
    const auto p = std::filesystem::path(out);
    const auto summary_path = (p.parent_path() / (p.stem().string() + "_summary.csv")).string();
    write_text_file(summary_path, summary);
    std::cout << "runs written to " << out << ", summary to " << summary_path << '\n';
  }
  for (const auto& run : result.runs) {
    if (!run.error.empty()) return kExitRuntime;
  }
  return 0;
}

int cmd_gradcheck(bool all, const std::vector<std::string>& ops, std::size_t trials, std::uint64_t seed) {
  if (trials < kGradcheckMinTrials) {
    throw ConfigError("gradcheck needs at least " + std::to_string(kGradcheckMinTrials) + " trials per op");
  }
  std::vector<GradcheckResult> results;
  if (all || ops.empty()) {
    results = run_all_gradchecks(trials, seed);
  } else {
    for (const auto& op : ops) results.push_back(run_gradcheck(op, trials, seed));
  }
  bool ok = true;
  for (const auto& r : results) {
    std::printf("%-34s %s  max_rel_err %.3e  trials %zu  coords %zu\n", r.name.c_str(), r.passed() ? "PASS" : "FAIL",
                r.max_rel_error, r.trials, r.coordinates);
    ok = ok && r.passed();
  }
  return ok ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adaptlab: parameter-efficient adapter lab"};
  app.require_subcommand(1);

  CommonFlags common;
  std::string out, corpus, checkpoint, split = "dev", axis = "kernels";
  std::size_t workers = 1, seeds = 3, trials = kGradcheckMinTrials;
  std::uint64_t gc_seed = 0;
  bool all = false;
  std::vector<std::string> ops;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus file");
  add_common(gen, common);
  gen->add_option("--spec", common.config, "Config file whose [data] section is used (same as --config)");
  gen->add_option("--out", out, "Corpus file to write")->required();
  gen->add_option("--workers", workers, "Generation threads")->check(CLI::PositiveNumber);

  auto* tr = app.add_subcommand("train", "Train and write checkpoint, log CSV and resolved config");
  add_common(tr, common);
  tr->add_option("--out", out, "Output directory")->required();
  tr->add_option("--corpus", corpus, "Corpus file (default: [data] path, else generated)");

  auto* ev = app.add_subcommand("eval", "Score a corpus split with a checkpoint");
  add_common(ev, common);
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  ev->add_option("--corpus", corpus, "Corpus file (default: [data] path, else generated)");
  ev->add_option("--out", out, "Score CSV to write");
  ev->add_option("--split", split, "dev, train or all")->check(CLI::IsMember({"dev", "train", "all"}));

  auto* cp = app.add_subcommand("count-params", "Audit trainable parameter counts");
  add_common(cp, common);
  cp->add_option("--out", out, "CSV to write");

  auto* ab = app.add_subcommand("ablate", "Run an ablation grid over seeds");
  add_common(ab, common);
  ab->add_option("--axis", axis, "kernels, aggregation, placement or method")->capture_default_str();
  ab->add_option("--seeds", seeds, "Seeds per grid point")->check(CLI::PositiveNumber)->capture_default_str();
  ab->add_option("--out", out, "Runs CSV to write (summary goes next to it)");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gc->add_flag("--all", all, "Check every op, block and adapter variant");
  gc->add_option("--op", ops, "Check one target (repeatable)");
  gc->add_option("--trials", trials, "Random trials per target")->capture_default_str();
  gc->add_option("--seed", gc_seed, "Trial seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*gen) return cmd_gen_data(common, out, workers);
    if (*tr) return cmd_train(common, out, corpus);
    if (*ev) return cmd_eval(common, checkpoint, corpus, out, split);
    if (*cp) return cmd_count_params(common, out);
    if (*ab) return cmd_ablate(common, axis, seeds, out);
    if (*gc) return cmd_gradcheck(all, ops, trials, gc_seed);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitValidation;
}
