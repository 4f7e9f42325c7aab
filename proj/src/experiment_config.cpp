#include "adaptlab/experiment_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <vector>

#include "adaptlab/errors.hpp"
#include "adaptlab/model.hpp"

namespace adaptlab {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, r.ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }
std::string quoted(std::string_view s) { return "\"" + std::string(s) + "\""; }

// Each reader throws std::invalid_argument with a short reason; the caller
// adds the line context.
double read_double(std::string_view v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size()) throw std::invalid_argument("expected a number");
  return out;
}

std::uint64_t read_uint(std::string_view v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size()) {
    throw std::invalid_argument("expected a non-negative integer");
  }
  return out;
}

bool read_bool(std::string_view v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw std::invalid_argument("expected true or false");
}

std::string read_string(std::string_view v) {
  if (v.size() < 2 || v.front() != '"' || v.back() != '"') throw std::invalid_argument("expected a quoted string");
  const auto inner = v.substr(1, v.size() - 2);
  if (inner.find('"') != std::string_view::npos) throw std::invalid_argument("embedded quote in string");
  return std::string(inner);
}

std::vector<std::string_view> read_list(std::string_view v) {
  if (v.size() < 2 || v.front() != '[' || v.back() != ']') throw std::invalid_argument("expected a [..] list");
  std::vector<std::string_view> items;
  auto inner = trim(v.substr(1, v.size() - 2));
  if (inner.empty()) return items;
  while (true) {
    const auto comma = inner.find(',');
    items.push_back(trim(inner.substr(0, comma)));
    if (items.back().empty()) throw std::invalid_argument("empty list element");
    if (comma == std::string_view::npos) break;
    inner = inner.substr(comma + 1);
  }
  return items;
}

struct Field {
  std::string key;
  std::function<void(std::string_view)> set;
  std::function<std::string()> get;
};

struct Section {
  std::string name;
  std::vector<Field> fields;
};

Field f_double(std::string key, double& ref) {
  return {std::move(key), [&ref](std::string_view v) { ref = read_double(v); }, [&ref] { return fmt(ref); }};
}

Field f_size(std::string key, std::size_t& ref) {
  return {std::move(key), [&ref](std::string_view v) { ref = read_uint(v); }, [&ref] { return fmt(std::uint64_t{ref}); }};
}

Field f_u64(std::string key, std::uint64_t& ref) {
  return {std::move(key), [&ref](std::string_view v) { ref = read_uint(v); }, [&ref] { return fmt(ref); }};
}

Field f_bool(std::string key, bool& ref) {
  return {std::move(key), [&ref](std::string_view v) { ref = read_bool(v); }, [&ref] { return fmt(ref); }};
}

std::vector<Section> sections(ExperimentConfig& c) {
  auto& e = c.encoder;
  auto& a = c.adapter;
  auto& t = c.train;
  auto& d = c.data;
  std::vector<Section> out;
  out.push_back({"encoder",
                 {f_size("num_layers", e.num_layers), f_size("model_dim", e.model_dim),
                  f_size("inner_dim", e.inner_dim), f_size("num_heads", e.num_heads),
                  f_size("input_dim", e.input_dim), f_size("max_seq_len", e.max_seq_len),
                  f_bool("pre_norm", e.pre_norm), f_bool("positional", e.positional),
                  f_u64("init_seed", e.init_seed)}});
  out.push_back({"adapter",
                 {{"variant", [&a](std::string_view v) { a.variant = parse_variant(read_string(v)); },
                   [&a] { return quoted(to_string(a.variant)); }},
                  f_size("bottleneck", a.bottleneck),
                  {"kernels",
                   [&a](std::string_view v) {
                     a.kernels.clear();
                     for (auto item : read_list(v)) a.kernels.push_back(read_uint(item));
                   },
                   [&a] {
                     std::string s = "[";
                     for (std::size_t i = 0; i < a.kernels.size(); ++i) s += (i ? ", " : "") + fmt(std::uint64_t{a.kernels[i]});
                     return s + "]";
                   }},
                  {"fusion", [&a](std::string_view v) { a.fusion = parse_fusion(read_string(v)); },
                   [&a] { return quoted(to_string(a.fusion)); }},
                  {"placement", [&a](std::string_view v) { a.placement = parse_placement(read_string(v)); },
                   [&a] { return quoted(to_string(a.placement)); }},
                  f_size("rank", a.rank), f_size("prompt_tokens", a.prompt_tokens)}});
  out.push_back({"train",
                 {f_double("lr", t.lr), f_double("beta1", t.beta1), f_double("beta2", t.beta2), f_double("eps", t.eps),
                  f_double("weight_decay", t.weight_decay), f_size("epochs", t.epochs),
                  f_size("batch_size", t.batch_size), f_u64("seed", t.seed),
                  {"mode", [&t](std::string_view v) { t.mode = parse_train_mode(read_string(v)); },
                   [&t] { return quoted(to_string(t.mode)); }}}});
  out.push_back({"data",
                 {{"path", [&c](std::string_view v) { c.corpus_path = read_string(v); },
                   [&c] { return quoted(c.corpus_path); }},
                  f_u64("seed", d.seed), f_size("num_records", d.num_records), f_size("num_frames", d.num_frames),
                  f_size("num_features", d.num_features),
                  {"mix",
                   [&d](std::string_view v) {
                     const auto items = read_list(v);
                     if (items.size() != 4) throw std::invalid_argument("mix needs 4 proportions (none, short, long, mixed)");
                     for (std::size_t i = 0; i < 4; ++i) d.mix[i] = read_double(items[i]);
                   },
                   [&d] { return "[" + fmt(d.mix[0]) + ", " + fmt(d.mix[1]) + ", " + fmt(d.mix[2]) + ", " + fmt(d.mix[3]) + "]"; }},
                  f_double("level_min", d.level_min), f_double("level_max", d.level_max),
                  f_double("ar_coef", d.ar_coef), f_double("ar_noise", d.ar_noise),
                  f_size("sinusoids_min", d.sinusoids_min), f_size("sinusoids_max", d.sinusoids_max),
                  f_double("sinusoid_amplitude", d.sinusoid_amplitude),
                  f_double("sinusoid_period_min", d.sinusoid_period_min),
                  f_double("sinusoid_period_max", d.sinusoid_period_max), f_size("bursts_min", d.bursts_min),
                  f_size("bursts_max", d.bursts_max), f_size("burst_len_min", d.burst_len_min),
                  f_size("burst_len_max", d.burst_len_max), f_double("burst_amplitude", d.burst_amplitude),
                  f_double("modulation_period_min", d.modulation_period_min),
                  f_double("modulation_period_max", d.modulation_period_max),
                  f_double("modulation_depth", d.modulation_depth)}});
  return out;
}

// Strips a trailing comment outside quotes.
std::string_view strip_comment(std::string_view line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

}  // namespace

void ExperimentConfig::validate() const {
  encoder.validate();
  adapter.validate(encoder);
  train.validate();
  data.validate();
  if (data.num_features != encoder.input_dim) {
    throw ConfigError("data.num_features " + std::to_string(data.num_features) + " differs from encoder.input_dim " +
                      std::to_string(encoder.input_dim));
  }
  if (data.num_frames > encoder.max_seq_len) {
    throw ConfigError("data.num_frames " + std::to_string(data.num_frames) + " exceeds encoder.max_seq_len " +
                      std::to_string(encoder.max_seq_len));
  }
}

AdapterConfig ExperimentConfig::method_defaults(std::string_view method) const {
  AdapterConfig a = AdapterConfig::for_method(method);
  if (preset == "toy") a.bottleneck = 16;
  return a;
}

std::string ExperimentConfig::resolved() const {
  ExperimentConfig copy = *this;
  std::ostringstream out;
  out << "# preset: " << preset << '\n';
  bool first = true;
  for (const auto& sec : sections(copy)) {
    out << (first ? "" : "\n") << '[' << sec.name << "]\n";
    first = false;
    for (const auto& f : sec.fields) out << f.key << " = " << f.get() << '\n';
  }
  return out.str();
}

ExperimentConfig ExperimentConfig::from_preset(std::string_view name) {
  ExperimentConfig c;
  if (name == "toy") return c;
  if (name == "xlsr") {
    c.preset = "xlsr";
    c.encoder = EncoderConfig::xlsr();
    c.adapter = AdapterConfig::multiconv();
    c.train = TrainConfig::reference();
    return c;
  }
  throw ConfigError("unknown preset '" + std::string(name) + "' (expected toy or xlsr)");
}

ExperimentConfig parse_experiment_config(std::string_view text, const ExperimentConfig& base) {
  ExperimentConfig c = base;
  auto table = sections(c);
  Section* current = nullptr;
  std::set<std::string> seen;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw ConfigError("config line " + std::to_string(lineno) + ": " + msg);
  };
  while (!text.empty()) {
    ++lineno;
    const auto nl = text.find('\n');
    const auto raw = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    const auto line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("malformed section header");
      const auto name = trim(line.substr(1, line.size() - 2));
      current = nullptr;
      for (auto& s : table) {
        if (s.name == name) current = &s;
      }
      if (!current) fail("unknown section [" + std::string(name) + "] (expected encoder, adapter, train, data)");
      if (!seen.insert("[" + current->name + "]").second) fail("duplicate section [" + current->name + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail("expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (!current) fail("key '" + std::string(key) + "' outside any section");
    Field* field = nullptr;
    for (auto& f : current->fields) {
      if (f.key == key) field = &f;
    }
    if (!field) fail("unknown key '" + std::string(key) + "' in [" + current->name + "]");
    if (!seen.insert(current->name + "." + field->key).second) fail("duplicate key '" + field->key + "'");
    if (value.empty()) fail("missing value for '" + field->key + "'");
    try {
      field->set(value);
    } catch (const ConfigError& e) {
      fail(current->name + "." + field->key + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      fail(current->name + "." + field->key + ": " + e.what());
    }
  }
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path, const ExperimentConfig& base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config file not found or unreadable: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_experiment_config(buf.str(), base);
}

}  // namespace adaptlab
