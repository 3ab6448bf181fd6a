#include "lidarnl/eval.hpp"

#include "lidarnl/errors.hpp"

namespace lidarnl {

ConfusionMatrix::ConfusionMatrix(int classes)
    : classes_(classes), counts_(static_cast<std::size_t>(classes) * classes, 0) {
  if (classes < 1) throw ConfigError("confusion matrix needs at least one class");
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (std::int64_t c : counts_) t += c;
  return t;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) throw ShapeError("confusion matrices differ in class count");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

void accumulate(ConfusionMatrix& cm, std::span<const ClassId> preds,
                std::span<const ClassId> truth) {
  if (preds.size() != truth.size()) {
    throw ShapeError("accumulate: " + std::to_string(preds.size()) + " predictions for " +
                     std::to_string(truth.size()) + " labels");
  }
  const int c = cm.classes();
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == kIgnore) continue;
    if (truth[i] >= c || preds[i] >= c) throw ShapeError("accumulate: class id out of range");
    ++cm.at(truth[i], preds[i]);
  }
}

std::optional<double> iou(const ConfusionMatrix& cm, int k) {
  const std::int64_t tp = cm.at(k, k);
  std::int64_t fp = 0, fn = 0;
  for (int j = 0; j < cm.classes(); ++j) {
    if (j == k) continue;
    fp += cm.at(j, k);
    fn += cm.at(k, j);
  }
  const std::int64_t denom = tp + fp + fn;
  if (denom == 0) return std::nullopt;
  return static_cast<double>(tp) / static_cast<double>(denom);
}

double miou(const ConfusionMatrix& cm, const std::vector<bool>& present_mask) {
  if (!present_mask.empty() && present_mask.size() != static_cast<std::size_t>(cm.classes())) {
    throw ShapeError("miou: mask length differs from the class count");
  }
  double sum = 0.0;
  int n = 0;
  for (int k = 0; k < cm.classes(); ++k) {
    if (!present_mask.empty() && !present_mask[static_cast<std::size_t>(k)]) continue;
    if (auto v = iou(cm, k)) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) throw NoClasses("miou: no present class has any points");
  return 100.0 * sum / n;
}

double arithmetic_mean(std::span<const double> values) {
  if (values.empty()) throw NoClasses("mean of an empty list");
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

double harmonic_mean(std::span<const double> values) {
  if (values.empty()) throw NoClasses("mean of an empty list");
  double s = 0.0;
  for (double v : values) {
    if (v == 0.0) throw ZeroDivision("harmonic mean is undefined with a zero mIoU");
    s += 1.0 / v;
  }
  return static_cast<double>(values.size()) / s;
}

Aggregate aggregate(std::span<const double> mious) {
  Aggregate a;
  a.am = arithmetic_mean(mious);
  try {
    a.hm = harmonic_mean(mious);
  } catch (const ZeroDivision&) {
    a.hm.reset();
  }
  return a;
}

DatasetResult score_dataset(std::string name, const ConfusionMatrix& cm,
                            std::vector<bool> present_mask) {
  DatasetResult r;
  r.name = std::move(name);
  r.cm = cm;
  if (present_mask.empty()) present_mask.assign(static_cast<std::size_t>(cm.classes()), true);
  if (present_mask.size() != static_cast<std::size_t>(cm.classes())) {
    throw ShapeError("dataset mask length differs from the class count");
  }
  r.present_mask = std::move(present_mask);
  for (int k = 0; k < cm.classes(); ++k) {
    r.iou.push_back(r.present_mask[static_cast<std::size_t>(k)] ? iou(cm, k) : std::nullopt);
  }
  r.miou = miou(cm, r.present_mask);
  return r;
}

MetricsReport make_report(std::vector<std::string> class_names,
                          std::vector<DatasetResult> datasets, Provenance provenance) {
  if (datasets.empty()) throw NoClasses("report needs at least one dataset");
  MetricsReport rep;
  rep.class_names = std::move(class_names);
  rep.datasets = std::move(datasets);
  rep.provenance = provenance;
  std::vector<double> mious;
  for (const DatasetResult& d : rep.datasets) mious.push_back(d.miou);
  const Aggregate a = aggregate(mious);
  rep.am = a.am;
  rep.hm = a.hm;
  return rep;
}

MetricsReport evaluate(const Model& model, std::span<const EvalDataset> datasets,
                       std::vector<std::string> class_names, Provenance provenance) {
  const int c = model.config().classes;
  if (class_names.size() != static_cast<std::size_t>(c)) {
    throw ShapeError("evaluate: class names do not match the model");
  }
  std::vector<DatasetResult> results;
  for (const EvalDataset& d : datasets) {
    ConfusionMatrix cm(c);
    for (const Scene& s : d.scenes) {
      if (s.labels.num_classes != c) throw ShapeError("evaluate: scene class count mismatch");
      accumulate(cm, infer(s, model).labels, s.labels.labels);
    }
    results.push_back(score_dataset(d.name, cm, d.present_mask));
  }
  return make_report(std::move(class_names), std::move(results), provenance);
}

}  // namespace lidarnl
