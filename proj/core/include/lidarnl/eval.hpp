#ifndef LIDARNL_EVAL_HPP_
#define LIDARNL_EVAL_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lidarnl/network.hpp"
#include "lidarnl/types.hpp"

namespace lidarnl {

// Rows are ground truth, columns predictions.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int classes);

  int classes() const { return classes_; }
  std::int64_t at(int truth, int pred) const {
    return counts_[static_cast<std::size_t>(truth) * classes_ + pred];
  }
  std::int64_t& at(int truth, int pred) {
    return counts_[static_cast<std::size_t>(truth) * classes_ + pred];
  }
  std::int64_t total() const;
  const std::vector<std::int64_t>& counts() const { return counts_; }

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  int classes_ = 0;
  std::vector<std::int64_t> counts_;
};

// Adds one count per point whose truth is not IGNORE. ShapeError on length
// mismatch or out-of-range ids.
void accumulate(ConfusionMatrix& cm, std::span<const ClassId> preds,
                std::span<const ClassId> truth);

// TP / (TP + FP + FN); nullopt (absent) when the denominator is zero.
std::optional<double> iou(const ConfusionMatrix& cm, int k);

// Mean IoU in percent over classes that are present in the mask and not
// absent. Empty mask means every class. NoClasses when nothing qualifies.
double miou(const ConfusionMatrix& cm, const std::vector<bool>& present_mask = {});

double arithmetic_mean(std::span<const double> values);
// ZeroDivision when any value is 0.
double harmonic_mean(std::span<const double> values);

struct Aggregate {
  double am = 0.0;
  std::optional<double> hm;  // undefined when some mIoU is 0
};

Aggregate aggregate(std::span<const double> mious);

struct EvalDataset {
  std::string name;
  std::span<const Scene> scenes;   // clean labels
  std::vector<bool> present_mask;  // empty = all classes
};

struct DatasetResult {
  std::string name;
  ConfusionMatrix cm;
  std::vector<bool> present_mask;
  std::vector<std::optional<double>> iou;  // per class, fraction in [0, 1]
  double miou = 0.0;                       // percent

  friend bool operator==(const DatasetResult&, const DatasetResult&) = default;
};

struct Provenance {
  std::uint64_t seed = 0;
  std::optional<double> eta;
  std::uint64_t config_hash = 0;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct MetricsReport {
  std::vector<std::string> class_names;
  std::vector<DatasetResult> datasets;
  double am = 0.0;
  std::optional<double> hm;
  Provenance provenance;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

DatasetResult score_dataset(std::string name, const ConfusionMatrix& cm,
                            std::vector<bool> present_mask);

// Assembles per-dataset scores and the AM / HM over their mIoUs.
MetricsReport make_report(std::vector<std::string> class_names,
                          std::vector<DatasetResult> datasets, Provenance provenance);

MetricsReport evaluate(const Model& model, std::span<const EvalDataset> datasets,
                       std::vector<std::string> class_names, Provenance provenance);

}  // namespace lidarnl

#endif  // LIDARNL_EVAL_HPP_
