#include "adaptlab/audit.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "adaptlab/errors.hpp"
#include "adaptlab/model.hpp"

namespace adaptlab {

namespace {

std::string site_of(const std::string& name) {
  if (name.starts_with("layers.")) {
    const auto dot = name.find('.', 7);
    return name.substr(0, dot);
  }
  return name.substr(0, name.find('.'));
}

std::uint64_t multiconv_site(const AdapterConfig& a, std::uint64_t d) {
  const std::uint64_t b = a.bottleneck;
  const std::uint64_t n = a.kernels.size();
  const std::uint64_t ksum = a.kernel_sum();
  std::uint64_t count = 2 * d * b;
  if (n == 0) return count;
  switch (a.fusion) {
    case Fusion::kMixupConv: count += (b / n) * ksum + 3 * b; break;
    case Fusion::kConcat: count += (b / n) * ksum; break;
    case Fusion::kSum: count += b * ksum; break;
    case Fusion::kWeightedSum: count += b * ksum + n; break;
  }
  return count;
}

std::uint64_t houlsby_site(const AdapterConfig& a, std::uint64_t d) {
  const std::uint64_t b = a.bottleneck;
  return (d * b + b) + (b * d + d) + 2 * d;
}

bool matches_reference_setup(const EncoderConfig& enc, const AdapterConfig& a) {
  const auto x = EncoderConfig::xlsr();
  if (enc.num_layers != x.num_layers || enc.model_dim != x.model_dim || enc.inner_dim != x.inner_dim ||
      enc.num_heads != x.num_heads) {
    return false;
  }
  const auto ref = AdapterConfig::for_method(to_string(a.variant));
  switch (a.variant) {
    case AdapterVariant::kMultiConv:
      return a.bottleneck == ref.bottleneck && a.fusion == ref.fusion && a.placement == ref.placement &&
             a.kernels.size() == 4 && a.kernel_sum() == ref.kernel_sum();
    case AdapterVariant::kHoulsby:
      return a.bottleneck == ref.bottleneck && a.placement == ref.placement;
    case AdapterVariant::kLoRA:
      return a.rank == ref.rank;
    case AdapterVariant::kPrompt:
      return a.prompt_tokens == ref.prompt_tokens;
    case AdapterVariant::kBitFit:
    case AdapterVariant::kNone:
      return true;
  }
  return false;
}

std::uint64_t total(const SiteCounts& c) {
  std::uint64_t n = 0;
  for (const auto& [site, count] : c) n += count;
  return n;
}

}  // namespace

std::optional<double> AuditReport::relative_deviation() const {
  if (!reference_count) return std::nullopt;
  const double ref = static_cast<double>(*reference_count);
  const double exact = static_cast<double>(closed_form_count);
  if (ref == 0.0) return exact == 0.0 ? 0.0 : INFINITY;
  return std::abs(exact - ref) / ref;
}

SiteCounts closed_form_counts(const EncoderConfig& enc, const AdapterConfig& a) {
  enc.validate();
  a.validate(enc);
  const std::uint64_t d = enc.model_dim;
  const std::uint64_t sites = a.num_sites();
  SiteCounts out;
  auto per_layer = [&](std::uint64_t n) {
    for (std::size_t l = 0; l < enc.num_layers; ++l) out.emplace_back("layers." + std::to_string(l), n);
  };
  switch (a.variant) {
    case AdapterVariant::kNone:
      break;
    case AdapterVariant::kMultiConv:
      per_layer(sites * multiconv_site(a, d));
      break;
    case AdapterVariant::kHoulsby:
      per_layer(sites * houlsby_site(a, d));
      break;
    case AdapterVariant::kLoRA:
      per_layer(4 * (d * a.rank + a.rank * d));
      break;
    case AdapterVariant::kBitFit:
      // q/k/v/out biases, both FFN biases, both LayerNorm biases.
      per_layer(4 * d + (enc.inner_dim + d) + 2 * d);
      break;
    case AdapterVariant::kPrompt:
      if (a.prompt_tokens > 0) out.emplace_back("prompt", static_cast<std::uint64_t>(a.prompt_tokens) * d);
      break;
  }
  return out;
}

SiteCounts introspected_counts(const EncoderConfig& enc, const AdapterConfig& a) {
  std::map<std::string, std::uint64_t> by_site;
  std::vector<std::string> order;
  for (const auto& spec : declare_parameters(enc, a, TrainMode::kPeft)) {
    if (!spec.trainable || is_head_parameter(spec.name)) continue;
    const auto site = site_of(spec.name);
    if (!by_site.contains(site)) order.push_back(site);
    by_site[site] += spec.count();
  }
  SiteCounts out;
  for (const auto& s : order) out.emplace_back(s, by_site[s]);
  return out;
}

AuditReport audit(const EncoderConfig& enc, const AdapterConfig& a) {
  const auto closed = closed_form_counts(enc, a);
  const auto intro = introspected_counts(enc, a);
  const std::size_t n = std::max(closed.size(), intro.size());
  for (std::size_t i = 0; i < n; ++i) {
    const bool same = i < closed.size() && i < intro.size() && closed[i] == intro[i];
    if (!same) {
      const std::string site = i < closed.size() ? closed[i].first : intro[i].first;
      const std::string cf = i < closed.size() ? std::to_string(closed[i].second) : "absent";
      const std::string in = i < intro.size() ? std::to_string(intro[i].second) : "absent";
      throw AuditError("parameter audit mismatch for " + std::string(to_string(a.variant)) + " at site " + site +
                       ": closed form " + cf + ", introspected " + in);
    }
  }
  AuditReport report;
  report.method = std::string(to_string(a.variant));
  report.closed_form_count = total(closed);
  report.introspected_count = total(intro);
  report.per_site = closed;
  if (matches_reference_setup(enc, a)) {
    if (auto m = reference_count_millions(a.variant)) {
      report.reference_count = static_cast<std::uint64_t>(std::llround(*m * 1e6));
    }
  }
  return report;
}

std::optional<double> reference_count_millions(AdapterVariant variant) {
  switch (variant) {
    case AdapterVariant::kNone: return 0.0;
    case AdapterVariant::kPrompt: return 0.03;
    case AdapterVariant::kBitFit: return 0.28;
    case AdapterVariant::kLoRA: return 3.15;
    case AdapterVariant::kHoulsby: return 6.44;
    case AdapterVariant::kMultiConv: return 3.17;
  }
  return std::nullopt;
}

std::vector<AdapterConfig> comparison_methods() {
  return {AdapterConfig::none(), AdapterConfig::prompt(),  AdapterConfig::bitfit(),
          AdapterConfig::lora(), AdapterConfig::houlsby(), AdapterConfig::multiconv()};
}

AuditTable audit_table(const EncoderConfig& enc) {
  AuditTable t;
  for (const auto& a : comparison_methods()) t.rows.push_back(audit(enc, a));
  return t;
}

namespace {

std::string fmt_millions(const AuditReport& r) {
  if (!r.reference_count) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", static_cast<double>(*r.reference_count) / 1e6);
  return buf;
}

std::string fmt_dev(const AuditReport& r) {
  const auto dev = r.relative_deviation();
  if (!dev) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *dev);
  return buf;
}

}  // namespace

std::string AuditTable::csv() const {
  std::ostringstream out;
  out << "method,exact_count,paper_count_M,rel_dev\n";
  for (const auto& r : rows) {
    out << r.method << ',' << r.closed_form_count << ',' << fmt_millions(r) << ',' << fmt_dev(r) << '\n';
  }
  return out.str();
}

std::string AuditTable::text() const {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %14s %14s %12s %10s\n", "method", "closed_form", "introspected",
                "reference (M)", "rel_dev");
  out << line;
  for (const auto& r : rows) {
    const auto dev = r.relative_deviation();
    char devs[32] = "-";
    if (dev) std::snprintf(devs, sizeof devs, "%.3f%%", 100.0 * *dev);
    const auto m = fmt_millions(r);
    std::snprintf(line, sizeof line, "%-12s %14llu %14llu %12s %10s\n", r.method.c_str(),
                  static_cast<unsigned long long>(r.closed_form_count),
                  static_cast<unsigned long long>(r.introspected_count), m.empty() ? "-" : m.c_str(), devs);
    out << line;
  }
  return out.str();
}

}  // namespace adaptlab
