#ifndef LIDARNL_TRAINER_HPP_
#define LIDARNL_TRAINER_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lidarnl/config.hpp"
#include "lidarnl/errors.hpp"
#include "lidarnl/network.hpp"

namespace lidarnl {

// lr0 * (1 + cos(pi * step / total_steps)) / 2. ConfigError when
// total_steps is 0 or step lies outside [0, total_steps].
double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr0);

// Multiplier on the auxiliary loss terms in a given epoch: min(1, epoch /
// warmup_epochs), or 1 when warmup_epochs is 0.
double aux_scale(int epoch, int warmup_epochs);

struct ClipResult {
  double norm_before = 0.0;
  double norm_after = 0.0;
};

// Rescales all gradients by max_norm / g when the global L2 norm g exceeds
// max_norm. NonFinite on NaN/Inf entries.
ClipResult clip_gradients(std::span<ad::Tensor> grads, double max_norm);

// auto: strong when the declared noise ratio is <= 0.2, weak above.
CandidateSource select_candidate_source(const TrainConfig& cfg);

// Per-class weights from label frequencies (IGNORE skipped), normalized to
// mean 1. Classes without labels are counted once so weights stay finite.
std::vector<double> class_weights_from_labels(std::span<const Scene> scenes, int classes,
                                              ClassWeighting scheme);

struct StepRecord {
  int epoch = 0;
  std::int64_t step = 0;
  double lr = 0.0;
  double grad_norm_pre = 0.0;
  double grad_norm_post = 0.0;
  double sem = 0.0, sifc = 0.0, scc = 0.0, nl = 0.0, ce = 0.0, pen = 0.0, fc = 0.0;
  double aux_scale = 1.0;  // applied to every term but sem
  double total = 0.0;
};

struct TrainHistory {
  CandidateSource candidate_source = CandidateSource::kStrong;
  std::vector<double> class_weights;
  std::vector<StepRecord> steps;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

struct TrainResult {
  Model model;
  TrainHistory history;
};

// Thrown when a loss or gradient turns non-finite; carries the history up to
// and including the failing step.
class TrainingDiverged : public NonFinite {
 public:
  TrainingDiverged(const std::string& what, TrainHistory history)
      : NonFinite(what), history_(std::move(history)) {}
  const TrainHistory& history() const { return history_; }

 private:
  TrainHistory history_;
};

using EpochCallback = std::function<void(int epoch, const Model& model)>;

// Trains on scenes whose labels already carry the injected noise. cfg.network
// .classes must be set. Deterministic in (cfg, scenes, seed).
TrainResult train(const ExperimentConfig& cfg, std::span<const Scene> scenes,
                  const std::vector<std::string>& class_names, std::uint64_t seed,
                  const EpochCallback& on_epoch = {});

}  // namespace lidarnl

#endif  // LIDARNL_TRAINER_HPP_
