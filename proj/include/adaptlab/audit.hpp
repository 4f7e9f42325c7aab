#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "adaptlab/adapter_config.hpp"
#include "adaptlab/encoder_config.hpp"

namespace adaptlab {

// Trainable-parameter count split by site: "layers.<l>" for everything inside
// a block, otherwise the first name component ("prompt", ...).
using SiteCounts = std::vector<std::pair<std::string, std::uint64_t>>;

struct AuditReport {
  std::string method;
  std::uint64_t closed_form_count = 0;
  std::uint64_t introspected_count = 0;
  SiteCounts per_site;
  // Published reference figure in raw parameters, present only when
  // (encoder, adapter) is the reference setup: XLSR with default hyperparameters.
  std::optional<std::uint64_t> reference_count;

  std::optional<double> relative_deviation() const;
};

// Counts from the method's algebraic form alone.
SiteCounts closed_form_counts(const EncoderConfig& enc, const AdapterConfig& adapter);
// Counts by walking the model's declared parameters in peft mode (the
// classification head is excluded, as the reference figures exclude the
// back-end classifier).
SiteCounts introspected_counts(const EncoderConfig& enc, const AdapterConfig& adapter);

// Both routes must agree site by site; otherwise throws AuditError naming the
// first divergent site.
AuditReport audit(const EncoderConfig& enc, const AdapterConfig& adapter);

// Reference values of the reported parameter column, in units of 1e6.
std::optional<double> reference_count_millions(AdapterVariant variant);

// Reference comparison order: none, prompt, bitfit, lora, houlsby, multiconv.
std::vector<AdapterConfig> comparison_methods();

struct AuditTable {
  std::vector<AuditReport> rows;
  std::string csv() const;
  std::string text() const;
};

AuditTable audit_table(const EncoderConfig& enc);

}  // namespace adaptlab
