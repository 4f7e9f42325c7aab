#include <gtest/gtest.h>

#include "adaptlab/audit.hpp"
#include "adaptlab/errors.hpp"

using namespace adaptlab;

namespace {

// Hand-expanded closed forms at the XLSR shape (L=24, D=1024, D_ff=4096).
constexpr std::uint64_t kL = 24, kD = 1024, kFf = 4096;

std::uint64_t count(const AdapterConfig& a, EncoderConfig enc = EncoderConfig::xlsr()) {
  return audit(enc, a).closed_form_count;
}

}  // namespace

TEST(Audit, ExactCountsAtXlsr) {
  EXPECT_EQ(count(AdapterConfig::multiconv()), kL * (2 * kD * 64 + 16 * (3 + 7 + 15 + 23) + 3 * 64));
  EXPECT_EQ(count(AdapterConfig::multiconv()), 3168768u);
  EXPECT_EQ(count(AdapterConfig::lora()), kL * 4 * 2 * kD * 16);
  EXPECT_EQ(count(AdapterConfig::lora()), 3145728u);
  EXPECT_EQ(count(AdapterConfig::houlsby()), 2 * kL * (kD * 64 + 64 + 64 * kD + kD + 2 * kD));
  EXPECT_EQ(count(AdapterConfig::houlsby()), 6441984u);
  EXPECT_EQ(count(AdapterConfig::bitfit()), kL * (4 * kD + kFf + kD + 2 * kD));
  EXPECT_EQ(count(AdapterConfig::bitfit()), 270336u);
  EXPECT_EQ(count(AdapterConfig::prompt()), 30u * kD);
  EXPECT_EQ(count(AdapterConfig::none()), 0u);
}

TEST(Audit, ClosedFormAgreesWithIntrospectionAcrossVariants) {
  EncoderConfig toy = EncoderConfig::toy();
  std::vector<AdapterConfig> configs = comparison_methods();
  for (auto fusion : {Fusion::kMixupConv, Fusion::kConcat, Fusion::kSum, Fusion::kWeightedSum}) {
    for (auto placement : {Placement::kMhsa, Placement::kFfn, Placement::kBoth}) {
      configs.push_back(AdapterConfig::multiconv({3, 7, 15, 23}, 16, fusion, placement));
    }
  }
  configs.push_back(AdapterConfig::multiconv({}, 16));
  for (const auto& enc : {toy, EncoderConfig::xlsr()}) {
    for (const auto& a : configs) {
      if (a.variant == AdapterVariant::kLoRA && a.rank >= enc.model_dim) continue;
      const auto r = audit(enc, a);
      EXPECT_EQ(r.closed_form_count, r.introspected_count) << to_string(a.variant);
      EXPECT_EQ(closed_form_counts(enc, a), introspected_counts(enc, a));
    }
  }
}

TEST(Audit, ReferenceDeviationsWithinTolerance) {
  const auto t = audit_table(EncoderConfig::xlsr());
  ASSERT_EQ(t.rows.size(), 6u);
  const double tol[] = {0.0, 0.03, 0.05, 0.002, 0.001, 0.001};
  for (std::size_t i = 0; i < 6; ++i) {
    ASSERT_TRUE(t.rows[i].relative_deviation()) << t.rows[i].method;
    EXPECT_LE(*t.rows[i].relative_deviation(), tol[i]) << t.rows[i].method;
  }
  // The BitFit gap is real: blocks-only biases fall short of 0.28M by ~3.5%.
  EXPECT_NEAR(*t.rows[2].relative_deviation(), 1.0 - 270336.0 / 280000.0, 1e-12);
}

TEST(Audit, ReferenceAttachedOnlyAtMatchingSetup) {
  EXPECT_FALSE(audit(EncoderConfig::toy(), AdapterConfig::multiconv({3, 7, 15, 23}, 16)).reference_count);
  EXPECT_FALSE(audit(EncoderConfig::xlsr(), AdapterConfig::multiconv({3}, 64)).reference_count);
  EXPECT_TRUE(audit(EncoderConfig::xlsr(), AdapterConfig::multiconv()).reference_count);
}

TEST(Audit, MonotoneInEveryBudgetKnob) {
  for (std::size_t b = 16; b < 128; b += 16) {
    EXPECT_LT(count(AdapterConfig::multiconv({3, 7, 15, 23}, b)), count(AdapterConfig::multiconv({3, 7, 15, 23}, b + 16)));
    EXPECT_LT(count(AdapterConfig::houlsby(b)), count(AdapterConfig::houlsby(b + 16)));
  }
  for (std::size_t r = 1; r < 32; ++r) EXPECT_LT(count(AdapterConfig::lora(r)), count(AdapterConfig::lora(r + 1)));
  for (std::size_t p = 1; p < 40; ++p) EXPECT_LT(count(AdapterConfig::prompt(p)), count(AdapterConfig::prompt(p + 1)));
  EXPECT_LT(count(AdapterConfig::multiconv({3, 7, 15, 23})), count(AdapterConfig::multiconv({3, 7, 15, 25})));
}

TEST(Audit, IndependentOfSequenceLength) {
  auto a = EncoderConfig::xlsr(), b = EncoderConfig::xlsr();
  b.max_seq_len = 4096;
  EXPECT_EQ(audit(a, AdapterConfig::multiconv()).closed_form_count, audit(b, AdapterConfig::multiconv()).closed_form_count);
}

TEST(Audit, PerSiteBreakdownCoversEveryLayer) {
  const auto r = audit(EncoderConfig::xlsr(), AdapterConfig::multiconv());
  ASSERT_EQ(r.per_site.size(), 24u);
  EXPECT_EQ(r.per_site[5].first, "layers.5");
  EXPECT_EQ(r.per_site[5].second, 3168768u / 24);
}

TEST(Audit, CsvLayout) {
  const auto csv = audit_table(EncoderConfig::xlsr()).csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "method,exact_count,paper_count_M,rel_dev");
  EXPECT_NE(csv.find("multiconv,3168768,3.17,"), std::string::npos);
  EXPECT_EQ(csv.find('\r'), std::string::npos);
}
