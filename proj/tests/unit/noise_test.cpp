#include <cmath>
#include <regex>

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include "lidarnl/errors.hpp"
#include "lidarnl/noise.hpp"
#include "lidarnl/rng.hpp"

namespace lidarnl {
namespace {

LabelArray random_labels(std::size_t n, int classes, std::uint64_t seed, double ignore_frac = 0) {
  Rng rng(seed);
  LabelArray a;
  a.num_classes = classes;
  for (std::size_t i = 0; i < n; ++i) {
    a.labels.push_back(rng.uniform() < ignore_frac
                           ? kIgnore
                           : static_cast<ClassId>(rng.below(static_cast<std::uint64_t>(classes))));
  }
  return a;
}

TEST(Noise, ZeroEtaIsIdentity) {
  const LabelArray clean = random_labels(1000, 5, 1, 0.1);
  const NoisyLabels out = inject_symmetric_noise(clean, {0.0, 3, 5});
  EXPECT_EQ(out.labels, clean);
  EXPECT_EQ(out.audit.flipped_count, 0);
}

TEST(Noise, FullEtaTwoClassesFlipsEverything) {
  const LabelArray clean = random_labels(1000, 2, 2, 0.05);
  const NoisyLabels out = inject_symmetric_noise(clean, {1.0, 3, 2});
  for (std::size_t i = 0; i < clean.size(); ++i) {
    if (clean.labels[i] == kIgnore) {
      EXPECT_EQ(out.labels.labels[i], kIgnore);
    } else {
      EXPECT_EQ(out.labels.labels[i], 1 - clean.labels[i]);
    }
  }
}

TEST(Noise, FlipFractionWithinBinomialBound) {
  const std::size_t n = 100000;
  const LabelArray clean = random_labels(n, 10, 4);
  for (double eta : {0.1, 0.2, 0.5}) {
    const NoisyLabels out = inject_symmetric_noise(clean, {eta, 17, 10});
    const double frac = static_cast<double>(out.audit.flipped_count) / n;
    const double three_sigma = 3.0 * std::sqrt(eta * (1 - eta) / n);
    EXPECT_NEAR(frac, eta, three_sigma) << eta;
  }
}

TEST(Noise, ReplacementIsUniformOverOtherClasses) {
  const int c = 10;
  const LabelArray clean = random_labels(200000, c, 5);
  const NoisyLabels out = inject_symmetric_noise(clean, {0.5, 23, c});
  // Pool the conditional distributions: chi-square with C*(C-2) dof.
  double chi2 = 0.0;
  int dof = 0;
  for (int y = 0; y < c; ++y) {
    const double expected = static_cast<double>(out.audit.row_flipped(y)) / (c - 1);
    for (int k = 0; k < c; ++k) {
      if (k == y) continue;
      const double d = static_cast<double>(out.audit.at(y, k)) - expected;
      chi2 += d * d / expected;
    }
    dof += c - 2;
  }
  const boost::math::chi_squared dist(dof);
  EXPECT_GT(boost::math::cdf(boost::math::complement(dist, chi2)), 0.001);
}

TEST(Noise, FlippedLabelNeverEqualsCleanAndAuditMatches) {
  const LabelArray clean = random_labels(20000, 6, 8, 0.1);
  const NoisyLabels out = inject_symmetric_noise(clean, {0.3, 1, 6});
  std::int64_t flips = 0, total = 0;
  std::vector<std::int64_t> m(36, 0);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const ClassId a = clean.labels[i];
    const ClassId b = out.labels.labels[i];
    if (a == kIgnore) {
      EXPECT_EQ(b, kIgnore);
      continue;
    }
    ASSERT_NE(b, kIgnore);
    ++total;
    flips += a != b ? 1 : 0;
    ++m[a * 6 + b];
  }
  EXPECT_EQ(out.audit.flipped_count, flips);
  EXPECT_EQ(out.audit.total_count, total);
  EXPECT_EQ(out.audit.flip_matrix, m);
  std::int64_t off = 0;
  for (int y = 0; y < 6; ++y) {
    for (int k = 0; k < 6; ++k) off += y == k ? 0 : out.audit.at(y, k);
  }
  EXPECT_EQ(off, out.audit.flipped_count);
}

TEST(Noise, DeterministicAndPartitionInvariant) {
  const LabelArray clean = random_labels(5000, 4, 9);
  const NoiseConfig cfg{0.2, 77, 4};
  const NoisyLabels whole = inject_symmetric_noise(clean, cfg);
  EXPECT_EQ(inject_symmetric_noise(clean, cfg).labels, whole.labels);

  LabelArray head{{clean.labels.begin(), clean.labels.begin() + 1234}, 4};
  LabelArray tail{{clean.labels.begin() + 1234, clean.labels.end()}, 4};
  const NoisyLabels a = inject_symmetric_noise(head, cfg, 0);
  const NoisyLabels b = inject_symmetric_noise(tail, cfg, 1234);
  std::vector<ClassId> joined = a.labels.labels;
  joined.insert(joined.end(), b.labels.labels.begin(), b.labels.labels.end());
  EXPECT_EQ(joined, whole.labels.labels);
  NoiseAudit merged = a.audit;
  merged.merge(b.audit);
  EXPECT_EQ(merged.flip_matrix, whole.audit.flip_matrix);
}

TEST(Noise, ConfigErrors) {
  const LabelArray clean = random_labels(10, 2, 1);
  EXPECT_THROW(inject_symmetric_noise(clean, {1.5, 1, 2}), ConfigError);
  EXPECT_THROW(inject_symmetric_noise(clean, {-0.1, 1, 2}), ConfigError);
  EXPECT_THROW(inject_symmetric_noise(clean, {0.1, 1, 1}), ConfigError);
}

TEST(Noise, ProtocolRatios) {
  for (double r : {0.02, 0.05, 0.1, 0.2, 0.5}) EXPECT_TRUE(is_protocol_ratio(r));
  EXPECT_FALSE(is_protocol_ratio(0.3));
}

TEST(NoiseAudit, TextReportsRatio) {
  NoiseAudit zero(3);
  zero.total_count = 10;
  zero.flip_matrix[0] = 10;
  EXPECT_NE(audit_to_text(zero).find("0.0000"), std::string::npos);

  NoiseAudit half(2);
  half.flip_matrix = {25, 25, 25, 25};
  half.total_count = 100;
  half.flipped_count = 50;
  EXPECT_NE(audit_to_text(half).find("0.5000"), std::string::npos);
}

TEST(NoiseAudit, TextReproducesRowSums) {
  const LabelArray clean = random_labels(3000, 4, 12);
  const NoisyLabels out = inject_symmetric_noise(clean, {0.2, 5, 4});
  const std::string text = audit_to_text(out.audit);
  for (int y = 0; y < 4; ++y) {
    std::int64_t row = 0;
    for (int k = 0; k < 4; ++k) row += out.audit.at(y, k);
    EXPECT_EQ(row, out.audit.row_total(y));
    const std::regex line("\\n\\s*" + std::to_string(y) + "\\s+" + std::to_string(row) + "\\s+" +
                          std::to_string(out.audit.row_flipped(y)) + "\\s");
    EXPECT_TRUE(std::regex_search(text, line)) << text;
  }
}

TEST(NoiseAudit, JsonCarriesRngAndCounts) {
  const LabelArray clean = random_labels(100, 3, 2);
  const NoiseConfig cfg{0.1, 4, 3};
  const NoisyLabels out = inject_symmetric_noise(clean, cfg);
  const auto j = audit_to_json(out.audit, cfg);
  EXPECT_EQ(j.at("flipped_count").get<std::int64_t>(), out.audit.flipped_count);
  EXPECT_EQ(j.dump().find("splitmix64") != std::string::npos, true);
}

}  // namespace
}  // namespace lidarnl
