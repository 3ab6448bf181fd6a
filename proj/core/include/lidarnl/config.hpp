#ifndef LIDARNL_CONFIG_HPP_
#define LIDARNL_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lidarnl/augment.hpp"
#include "lidarnl/losses.hpp"
#include "lidarnl/network.hpp"

namespace lidarnl {

enum class CandidateMode { kStrong, kWeak, kAuto };
enum class Objective {
  kFull,  // every term of the dual-view objective
  kCe,    // weighted CE only, same views and schedule
};
enum class ClassWeighting { kUniform, kInverseFrequency, kInverseSqrtFrequency };

struct TrainConfig {
  double lr0 = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_size = 4;
  int epochs = 40;
  double clip_norm = 35.0;
  CandidateMode candidate_source = CandidateMode::kAuto;
  std::optional<double> eta_declared;
  double tau = 0.9;
  Objective objective = Objective::kFull;
  ClassWeighting class_weighting = ClassWeighting::kInverseSqrtFrequency;
  int checkpoint_every = 0;  // epochs; 0 writes only the final checkpoint
  // Auxiliary terms (everything but L_sem) are scaled by epoch / warmup_epochs
  // until that reaches 1. 0 turns the ramp off.
  int warmup_epochs = 0;

  void validate() const;
};

struct AugmentConfig {
  bool swap = true;
  bool paste = true;
  double sigma = 3.141592653589793;
  int paste_angles = 2;
  std::vector<std::string> thing_classes = {"car",           "bicycle",   "motorcycle", "truck",
                                            "other-vehicle", "pedestrian"};
  bool weak_rotate = true;
  RangeGridConfig grid;
  int drop_count = 1;

  void validate() const;
  // Thing classes that exist in class_names, as ids.
  PolarMixConfig polarmix(const std::vector<std::string>& class_names) const;
};

struct ExperimentConfig {
  TrainConfig train;
  LossWeights loss;
  SccMode scc_mode = SccMode::kClassGram;
  AugmentConfig augment;
  NetworkConfig network;  // network.classes 0 = take it from the data

  void validate() const;

  // Flat `section.key = value` text; '#' starts a comment. Unknown keys,
  // duplicates and unparsable values throw ConfigError naming the line.
  static ExperimentConfig parse(std::string_view text);
  static ExperimentConfig load(const std::filesystem::path& path);
  // Canonical form: every key, fixed order, round-trippable numbers.
  std::string to_text() const;
  std::uint64_t hash() const;
};

std::string_view to_string(CandidateMode m);
std::string_view to_string(Objective o);
std::string_view to_string(ClassWeighting w);
std::string_view to_string(SccMode m);

}  // namespace lidarnl

#endif  // LIDARNL_CONFIG_HPP_
