#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "adaptlab/eer.hpp"
#include "adaptlab/tensor.hpp"

namespace adaptlab {

enum class ArtifactClass : std::uint8_t { kNone = 0, kShort = 1, kLong = 2, kMixed = 3 };

std::string_view to_string(ArtifactClass c);

struct SpoofRecord {
  std::uint32_t id = 0;
  Label label = Label::kBonafide;
  ArtifactClass artifact = ArtifactClass::kNone;
  // [T, F]
  Tensor<float> features;

  friend bool operator==(const SpoofRecord&, const SpoofRecord&) = default;
};

struct CorpusSpec {
  std::uint64_t seed = 0;
  std::size_t num_records = 2000;
  std::size_t num_frames = 200;
  std::size_t num_features = 16;

  // Proportions of none / short / long / mixed; must sum to 1.
  std::array<double, 4> mix{0.5, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0};

  // Bonafide base: per-feature level + AR(1) noise + slow sinusoids.
  double level_min = 1.0;
  double level_max = 3.0;
  double ar_coef = 0.9;
  double ar_noise = 0.15;
  std::size_t sinusoids_min = 2;
  std::size_t sinusoids_max = 4;
  double sinusoid_amplitude = 0.15;
  double sinusoid_period_min = 150.0;
  double sinusoid_period_max = 600.0;

  // Short artifacts: additive bursts shared by all features.
  std::size_t bursts_min = 3;
  std::size_t bursts_max = 6;
  std::size_t burst_len_min = 1;
  std::size_t burst_len_max = 3;
  double burst_amplitude = 2.0;

  // Long artifacts: envelope 1 + depth * sin(2 pi t / P + phase).
  double modulation_period_min = 40.0;
  double modulation_period_max = 120.0;
  double modulation_depth = 0.5;

  // Throws ConfigError.
  void validate() const;
};

struct Corpus {
  std::size_t num_frames = 0;
  std::size_t num_features = 0;
  std::vector<SpoofRecord> records;

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

// Record i draws only from SplitRng(seed).child(i), so content is independent
// of the worker count.
Corpus generate(const CorpusSpec& spec, std::size_t workers = 1);

// Artifact class of every record slot: largest-remainder counts, shuffled by
// a seed-derived stream.
std::vector<ArtifactClass> assign_classes(const CorpusSpec& spec);

inline constexpr char kCorpusMagic[4] = {'S', 'P', 'F', 'B'};
inline constexpr std::uint16_t kCorpusVersion = 1;
inline constexpr std::size_t kCorpusHeaderBytes = 4 + 2 + 4 + 4 + 4;
inline constexpr std::size_t kRecordHeaderBytes = 4 + 1 + 1;

void write_corpus(const Corpus& corpus, std::ostream& out);
void write_corpus(const Corpus& corpus, const std::string& path);
// Throws FormatError (bad magic, version mismatch, truncation, invalid field).
Corpus read_corpus(std::istream& in);
Corpus read_corpus(const std::string& path);

}  // namespace adaptlab
