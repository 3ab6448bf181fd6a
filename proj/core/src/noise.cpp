#include "lidarnl/noise.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "lidarnl/errors.hpp"
#include "lidarnl/rng.hpp"

namespace lidarnl {

void NoiseConfig::validate() const {
  if (!(eta >= 0.0 && eta <= 1.0)) {
    throw ConfigError("noise ratio must lie in [0, 1]");
  }
  if (classes < 1) throw ConfigError("noise: class count must be positive");
  if (classes < 2 && eta > 0.0) {
    throw ConfigError("noise: flipping needs at least 2 classes");
  }
}

bool is_protocol_ratio(double eta) {
  for (double r : kProtocolNoiseRatios) {
    if (std::abs(eta - r) < 1e-12) return true;
  }
  return false;
}

std::int64_t NoiseAudit::row_total(int clean) const {
  std::int64_t s = 0;
  for (int j = 0; j < classes; ++j) s += at(clean, j);
  return s;
}

std::int64_t NoiseAudit::row_flipped(int clean) const {
  return row_total(clean) - at(clean, clean);
}

double NoiseAudit::flip_ratio() const {
  return total_count == 0 ? 0.0
                          : static_cast<double>(flipped_count) /
                                static_cast<double>(total_count);
}

void NoiseAudit::merge(const NoiseAudit& other) {
  if (other.classes != classes) throw ShapeError("audit class counts differ");
  flipped_count += other.flipped_count;
  total_count += other.total_count;
  for (std::size_t i = 0; i < flip_matrix.size(); ++i) flip_matrix[i] += other.flip_matrix[i];
}

NoisyLabels inject_symmetric_noise(const LabelArray& labels, const NoiseConfig& cfg,
                                   std::uint64_t index_offset) {
  cfg.validate();
  if (labels.num_classes != cfg.classes) {
    throw ShapeError("label class count " + std::to_string(labels.num_classes) +
                     " != noise config class count " + std::to_string(cfg.classes));
  }
  labels.validate();

  NoisyLabels out{labels, NoiseAudit(cfg.classes)};
  const std::uint64_t key = derive_seed(cfg.seed, "symmetric-noise");
  const auto others = static_cast<std::uint64_t>(cfg.classes - 1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const ClassId clean = labels.labels[i];
    if (clean == kIgnore) continue;
    const std::uint64_t counter = 2 * (index_offset + i);
    ClassId noisy = clean;
    if (unit_double(counter_bits(key, counter)) < cfg.eta) {
      // Uniform over {0..C-1} \ {clean}: draw from C-1 slots and skip clean.
      const auto r = static_cast<ClassId>(reduce_below(counter_bits(key, counter + 1), others));
      noisy = r < clean ? r : static_cast<ClassId>(r + 1);
      ++out.audit.flipped_count;
    }
    out.labels.labels[i] = noisy;
    ++out.audit.total_count;
    ++out.audit.flip_matrix[static_cast<std::size_t>(clean) * cfg.classes + noisy];
  }
  return out;
}

std::string audit_to_text(const NoiseAudit& audit) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "symmetric label noise audit\n";
  os << "  labels considered : " << audit.total_count << '\n';
  os << "  labels flipped    : " << audit.flipped_count << '\n';
  os << "  flip ratio        : " << audit.flip_ratio() << '\n';
  os << "  class      total    flipped  ratio\n";
  for (int c = 0; c < audit.classes; ++c) {
    const std::int64_t total = audit.row_total(c);
    const std::int64_t flipped = audit.row_flipped(c);
    const double ratio = total == 0 ? 0.0 : static_cast<double>(flipped) / static_cast<double>(total);
    os << "  " << std::setw(5) << c << "  " << std::setw(9) << total << "  "
       << std::setw(9) << flipped << "  " << ratio << '\n';
  }
  return os.str();
}

nlohmann::json audit_to_json(const NoiseAudit& audit, const NoiseConfig& cfg) {
  nlohmann::json j;
  j["eta"] = cfg.eta;
  j["seed"] = cfg.seed;
  j["classes"] = audit.classes;
  j["rng"] = {{"name", kRngName}, {"version", kRngVersion}};
  j["total_count"] = audit.total_count;
  j["flipped_count"] = audit.flipped_count;
  j["flip_ratio"] = audit.flip_ratio();
  nlohmann::json rows = nlohmann::json::array();
  for (int c = 0; c < audit.classes; ++c) {
    nlohmann::json row = nlohmann::json::array();
    for (int k = 0; k < audit.classes; ++k) row.push_back(audit.at(c, k));
    rows.push_back(row);
  }
  j["flip_matrix"] = rows;
  return j;
}

}  // namespace lidarnl
