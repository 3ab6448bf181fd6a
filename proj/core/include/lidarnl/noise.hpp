#ifndef LIDARNL_NOISE_HPP_
#define LIDARNL_NOISE_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lidarnl/types.hpp"

namespace lidarnl {

// Symmetric label noise: each annotated label is kept with probability
// 1 - eta and otherwise replaced by a uniform draw from the other C - 1
// classes. The noise is drawn once for a training set, not per epoch.
struct NoiseConfig {
  double eta = 0.0;
  std::uint64_t seed = 0;
  int classes = 0;

  void validate() const;
};

// Ratios used by the benchmark protocol.
inline constexpr double kProtocolNoiseRatios[] = {0.02, 0.05, 0.1, 0.2, 0.5};
bool is_protocol_ratio(double eta);

struct NoiseAudit {
  int classes = 0;
  std::int64_t flipped_count = 0;
  std::int64_t total_count = 0;  // non-IGNORE labels considered
  // Row = clean label, column = noisy label.
  std::vector<std::int64_t> flip_matrix;

  explicit NoiseAudit(int c = 0)
      : classes(c), flip_matrix(static_cast<std::size_t>(c) * c, 0) {}

  std::int64_t at(int clean, int noisy) const {
    return flip_matrix[static_cast<std::size_t>(clean) * classes + noisy];
  }
  std::int64_t row_total(int clean) const;
  std::int64_t row_flipped(int clean) const;
  double flip_ratio() const;

  void merge(const NoiseAudit& other);
};

struct NoisyLabels {
  LabelArray labels;
  NoiseAudit audit;
};

// Draws for point i are keyed by (cfg.seed, index_offset + i), so splitting a
// dataset into files or shards yields the same labels as one pass over the
// concatenation. IGNORE points are never touched.
NoisyLabels inject_symmetric_noise(const LabelArray& labels, const NoiseConfig& cfg,
                                   std::uint64_t index_offset = 0);

std::string audit_to_text(const NoiseAudit& audit);
nlohmann::json audit_to_json(const NoiseAudit& audit, const NoiseConfig& cfg);

}  // namespace lidarnl

#endif  // LIDARNL_NOISE_HPP_
