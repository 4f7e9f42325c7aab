#include "adaptlab/spoofbench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <thread>

#include "adaptlab/binary_io.hpp"
#include "adaptlab/errors.hpp"
#include "adaptlab/split_rng.hpp"

namespace adaptlab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

bool has_short(ArtifactClass c) { return c == ArtifactClass::kShort || c == ArtifactClass::kMixed; }
bool has_long(ArtifactClass c) { return c == ArtifactClass::kLong || c == ArtifactClass::kMixed; }

std::size_t draw_count(SplitRng& rng, std::size_t lo, std::size_t hi) {
  return static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
}

// Row-major [T, F] in double. The slow contour is shared by all features and
// scales with each feature's level, like the envelope of a long artifact.
void add_base(const CorpusSpec& s, SplitRng rng, std::vector<double>& x) {
  const std::size_t T = s.num_frames, F = s.num_features;
  SplitRng c = rng.child("contour");
  const std::size_t m = draw_count(c, s.sinusoids_min, s.sinusoids_max);
  std::vector<double> contour(T, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    const double period = c.uniform(s.sinusoid_period_min, s.sinusoid_period_max);
    const double phase = c.uniform(0.0, kTwoPi);
    const double amp = s.sinusoid_amplitude * c.uniform(0.5, 1.0);
    for (std::size_t t = 0; t < T; ++t) contour[t] += amp * std::sin(kTwoPi * static_cast<double>(t) / period + phase);
  }
  const double stationary = s.ar_noise / std::sqrt(1.0 - s.ar_coef * s.ar_coef);
  for (std::size_t f = 0; f < F; ++f) {
    SplitRng r = rng.child(f);
    const double level = r.uniform(s.level_min, s.level_max);
    double e = stationary * r.normal();
    for (std::size_t t = 0; t < T; ++t) {
      if (t > 0) e = s.ar_coef * e + s.ar_noise * r.normal();
      x[t * F + f] = level * (1.0 + contour[t]) + e;
    }
  }
}

void apply_long(const CorpusSpec& s, SplitRng rng, std::vector<double>& x) {
  const std::size_t T = s.num_frames, F = s.num_features;
  const double period = rng.uniform(s.modulation_period_min, s.modulation_period_max);
  const double phase = rng.uniform(0.0, kTwoPi);
  for (std::size_t t = 0; t < T; ++t) {
    const double env = 1.0 + s.modulation_depth * std::sin(kTwoPi * static_cast<double>(t) / period + phase);
    for (std::size_t f = 0; f < F; ++f) x[t * F + f] *= env;
  }
}

// One burst per equal-width segment, ending at least one frame before the
// segment does, keeps bursts separated.
void apply_short(const CorpusSpec& s, SplitRng rng, std::vector<double>& x) {
  const std::size_t T = s.num_frames, F = s.num_features;
  const std::size_t k = draw_count(rng, s.bursts_min, s.bursts_max);
  const std::size_t segment = T / k;
  for (std::size_t b = 0; b < k; ++b) {
    const std::size_t len = draw_count(rng, s.burst_len_min, s.burst_len_max);
    const std::size_t room = segment > len ? segment - len - 1 : 0;
    const std::size_t start = b * segment + draw_count(rng, 0, room);
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    for (std::size_t t = start; t < std::min(start + len, T); ++t) {
      for (std::size_t f = 0; f < F; ++f) x[t * F + f] += sign * s.burst_amplitude;
    }
  }
}

SpoofRecord make_record(const CorpusSpec& s, std::uint32_t id, ArtifactClass cls) {
  const SplitRng rng = SplitRng(s.seed).child(id);
  std::vector<double> x(s.num_frames * s.num_features);
  add_base(s, rng.child(0), x);
  if (has_long(cls)) apply_long(s, rng.child(2), x);
  if (has_short(cls)) apply_short(s, rng.child(1), x);
  SpoofRecord rec;
  rec.id = id;
  rec.label = cls == ArtifactClass::kNone ? Label::kBonafide : Label::kSpoof;
  rec.artifact = cls;
  rec.features = Tensor<float>({s.num_frames, s.num_features}, std::vector<float>(x.begin(), x.end()));
  return rec;
}

}  // namespace

std::string_view to_string(ArtifactClass c) {
  switch (c) {
    case ArtifactClass::kNone: return "none";
    case ArtifactClass::kShort: return "short";
    case ArtifactClass::kLong: return "long";
    case ArtifactClass::kMixed: return "mixed";
  }
  return "?";
}

void CorpusSpec::validate() const {
  if (num_records == 0) throw ConfigError("num_records must be > 0");
  if (num_records > UINT32_MAX) throw ConfigError("num_records exceeds the u32 id range");
  if (num_frames == 0 || num_features == 0) throw ConfigError("num_frames and num_features must be > 0");
  double total = 0.0;
  for (double p : mix) {
    if (!(p >= 0.0)) throw ConfigError("artifact mix proportions must be >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("artifact mix proportions must sum to 1");
  if (!(level_min <= level_max)) throw ConfigError("level_min must be <= level_max");
  if (!(ar_coef > -1.0 && ar_coef < 1.0)) throw ConfigError("ar_coef must lie in (-1, 1)");
  if (ar_noise < 0.0 || sinusoid_amplitude < 0.0) throw ConfigError("noise amplitudes must be >= 0");
  if (sinusoids_min > sinusoids_max) throw ConfigError("sinusoids_min must be <= sinusoids_max");
  if (!(sinusoid_period_min > 0.0 && sinusoid_period_min <= sinusoid_period_max)) {
    throw ConfigError("sinusoid periods must satisfy 0 < min <= max");
  }
  if (bursts_min == 0 || bursts_min > bursts_max) throw ConfigError("bursts must satisfy 1 <= min <= max");
  if (bursts_max > num_frames) throw ConfigError("bursts_max must not exceed num_frames");
  if (burst_len_min == 0 || burst_len_min > burst_len_max || burst_len_max > 3) {
    throw ConfigError("burst lengths must satisfy 1 <= min <= max <= 3");
  }
  if (burst_amplitude < 0.0 || modulation_depth < 0.0) throw ConfigError("artifact magnitudes must be >= 0");
  if (!(modulation_period_min > 0.0 && modulation_period_min <= modulation_period_max)) {
    throw ConfigError("modulation periods must satisfy 0 < min <= max");
  }
}

std::vector<ArtifactClass> assign_classes(const CorpusSpec& spec) {
  const std::size_t n = spec.num_records;
  std::array<std::size_t, 4> count{};
  std::array<double, 4> frac{};
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < 4; ++c) {
    const double want = spec.mix[c] * static_cast<double>(n);
    count[c] = static_cast<std::size_t>(std::floor(want));
    frac[c] = want - static_cast<double>(count[c]);
    assigned += count[c];
  }
  std::array<std::size_t, 4> order{0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++count[order[i % 4]];

  std::vector<ArtifactClass> slots;
  slots.reserve(n);
  for (std::size_t c = 0; c < 4; ++c) slots.insert(slots.end(), count[c], static_cast<ArtifactClass>(c));
  SplitRng rng = SplitRng(spec.seed).child("classes");
  shuffle(std::span(slots), rng);
  return slots;
}

Corpus generate(const CorpusSpec& spec, std::size_t workers) {
  spec.validate();
  const auto classes = assign_classes(spec);
  Corpus corpus{spec.num_frames, spec.num_features, std::vector<SpoofRecord>(spec.num_records)};
  const std::size_t w = std::clamp<std::size_t>(workers, 1, spec.num_records);
  auto run = [&](std::size_t first) {
    for (std::size_t i = first; i < spec.num_records; i += w) {
      corpus.records[i] = make_record(spec, static_cast<std::uint32_t>(i), classes[i]);
    }
  };
  if (w == 1) {
    run(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t k = 0; k < w; ++k) pool.emplace_back(run, k);
  }
  return corpus;
}

void write_corpus(const Corpus& corpus, std::ostream& out) {
  out.write(kCorpusMagic, 4);
  binio::put_uint<std::uint16_t>(out, kCorpusVersion);
  binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(corpus.records.size()));
  binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(corpus.num_frames));
  binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(corpus.num_features));
  const Shape expect{corpus.num_frames, corpus.num_features};
  for (const auto& r : corpus.records) {
    if (r.features.shape() != expect) {
      throw ShapeError("record " + std::to_string(r.id) + " has shape " + shape_str(r.features.shape()) +
                       ", corpus expects " + shape_str(expect));
    }
    binio::put_uint<std::uint32_t>(out, r.id);
    binio::put_uint<std::uint8_t>(out, static_cast<std::uint8_t>(r.label));
    binio::put_uint<std::uint8_t>(out, static_cast<std::uint8_t>(r.artifact));
    for (float v : r.features.data()) binio::put_float(out, v);
  }
  if (!out) throw FormatError(FormatError::Kind::kIo, "failed writing corpus");
}

void write_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::kIo, "cannot open " + path + " for writing");
  write_corpus(corpus, out);
}

Corpus read_corpus(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4) throw FormatError(FormatError::Kind::kTruncated, "truncated file while reading magic");
  if (!std::equal(magic, magic + 4, kCorpusMagic)) {
    throw FormatError(FormatError::Kind::kBadMagic, "bad magic: not a spoofbench corpus");
  }
  const auto version = binio::get_uint<std::uint16_t>(in, "version");
  if (version != kCorpusVersion) {
    throw FormatError(FormatError::Kind::kVersionMismatch,
                      "version mismatch: file has " + std::to_string(version) + ", reader supports " +
                          std::to_string(kCorpusVersion));
  }
  Corpus corpus;
  const auto n = binio::get_uint<std::uint32_t>(in, "record count");
  corpus.num_frames = binio::get_uint<std::uint32_t>(in, "frame count");
  corpus.num_features = binio::get_uint<std::uint32_t>(in, "feature count");
  const std::size_t values = corpus.num_frames * corpus.num_features;
  corpus.records.reserve(std::min<std::size_t>(n, 1 << 16));
  for (std::uint32_t i = 0; i < n; ++i) {
    SpoofRecord r;
    r.id = binio::get_uint<std::uint32_t>(in, "record id");
    const auto label = binio::get_uint<std::uint8_t>(in, "label");
    const auto cls = binio::get_uint<std::uint8_t>(in, "artifact class");
    if (label > 1 || cls > 3 || (label == 0) != (cls == 0)) {
      throw FormatError(FormatError::Kind::kInvalid,
                        "record " + std::to_string(r.id) + " has inconsistent label/artifact class");
    }
    r.label = static_cast<Label>(label);
    r.artifact = static_cast<ArtifactClass>(cls);
    std::vector<float> x(values);
    for (auto& v : x) v = binio::get_float<float>(in, "features");
    r.features = Tensor<float>({corpus.num_frames, corpus.num_features}, std::move(x));
    corpus.records.push_back(std::move(r));
  }
  return corpus;
}

Corpus read_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::kIo, "cannot open " + path);
  return read_corpus(in);
}

}  // namespace adaptlab
