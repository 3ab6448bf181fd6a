#include "lidarnl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "lidarnl/augment.hpp"
#include "lidarnl/losses.hpp"
#include "lidarnl/rng.hpp"

namespace lidarnl {
namespace {

using ad::Graph;
using ad::Tensor;
using ad::Var;

struct SceneTerms {
  LossComponents parts;
  std::vector<Prototypes> protos;
};

SceneTerms scene_terms(Graph& g, const ModelVars& m, const DualViews& v,
                       const ExperimentConfig& cfg, std::span<const double> class_weights,
                       CandidateSource source) {
  FeatureSet f_ss = encode(g, v.p_ss, m, ViewTag::kSs);
  FeatureSet f_sa = encode(g, v.p_sa, m, ViewTag::kSa);
  FeatureSet f_ws = encode(g, v.p_ws, m, ViewTag::kWs);
  FeatureSet f_wa = encode(g, v.p_wa, m, ViewTag::kWa);

  Var logits_s = decode_strong(f_ss, f_sa, m, v.idx_ss_in_sa);
  WeakLogits weak = decode_weak(f_ws, f_wa, m, v.idx_ws_in_wa);

  SceneTerms t;
  t.parts.sem = ad::scale(ad::add(weighted_ce(logits_s, v.p_sa.labels.labels, class_weights),
                                  weighted_ce(weak.wa, v.p_wa.labels.labels, class_weights)),
                          0.5);
  if (cfg.train.objective == Objective::kCe) return t;

  t.parts.sifc = sifc(f_ws.per_point, f_wa.per_point, v.idx_ws_in_wa);

  const int classes = m.cfg->classes;
  t.protos.push_back(class_prototypes(metric_embed(f_ws, m), v.p_ws.labels.labels, classes));
  t.protos.push_back(class_prototypes(metric_embed(f_wa, m), v.p_wa.labels.labels, classes));

  const CandidateSets sets = build_candidate_sets(logits_s.value(), weak.ws.value(),
                                                  weak.wa.value(), v, source, cfg.train.tau);
  NpnTerms npn = npn_terms(source == CandidateSource::kStrong ? logits_s : weak.wa, sets);
  t.parts.nl = npn.nl;
  t.parts.ce = npn.ce;
  t.parts.pen = npn.pen;

  std::vector<std::size_t> sa_rows, wa_rows;
  for (std::size_t i = 0; i < v.sa_origin.size(); ++i) {
    if (v.sa_origin[i] < 0) continue;
    sa_rows.push_back(i);
    wa_rows.push_back(static_cast<std::size_t>(v.sa_origin[i]));
  }
  t.parts.fc = fc_loss(f_sa.per_point, f_wa.per_point, sa_rows, wa_rows);
  return t;
}

void accumulate(Var& acc, const Var& term) {
  if (!term.valid()) return;
  acc = acc.valid() ? ad::add(acc, term) : term;
}

Var averaged(const Var& v, double inv) { return v.valid() ? ad::scale(v, inv) : v; }

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

}  // namespace

double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr0) {
  if (total_steps <= 0) throw ConfigError("cosine_lr: total_steps must be positive");
  if (step < 0 || step > total_steps) throw ConfigError("cosine_lr: step outside [0, total_steps]");
  const double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr0 * (1.0 + std::cos(std::numbers::pi * t)) / 2.0;
}

double aux_scale(int epoch, int warmup_epochs) {
  if (warmup_epochs <= 0) return 1.0;
  return std::min(1.0, static_cast<double>(epoch) / static_cast<double>(warmup_epochs));
}

ClipResult clip_gradients(std::span<Tensor> grads, double max_norm) {
  double sq = 0.0;
  for (const Tensor& g : grads) {
    for (double v : g.data()) {
      if (!std::isfinite(v)) throw NonFinite("clip_gradients: non-finite gradient entry");
      sq += v * v;
    }
  }
  ClipResult r;
  r.norm_before = std::sqrt(sq);
  r.norm_after = r.norm_before;
  if (r.norm_before > max_norm) {
    const double s = max_norm / r.norm_before;
    double after = 0.0;
    for (Tensor& g : grads) {
      for (double& v : g.data()) {
        v *= s;
        after += v * v;
      }
    }
    r.norm_after = std::sqrt(after);
  }
  return r;
}

CandidateSource select_candidate_source(const TrainConfig& cfg) {
  switch (cfg.candidate_source) {
    case CandidateMode::kStrong: return CandidateSource::kStrong;
    case CandidateMode::kWeak: return CandidateSource::kWeak;
    case CandidateMode::kAuto:
      if (!cfg.eta_declared) {
        throw ConfigError("train.candidate_source = auto needs train.eta");
      }
      return *cfg.eta_declared <= 0.2 ? CandidateSource::kStrong : CandidateSource::kWeak;
  }
  throw ConfigError("invalid candidate source");
}

std::vector<double> class_weights_from_labels(std::span<const Scene> scenes, int classes,
                                              ClassWeighting scheme) {
  if (classes < 1) throw ConfigError("class weights need at least one class");
  std::vector<double> counts(static_cast<std::size_t>(classes), 0.0);
  for (const Scene& s : scenes) {
    for (ClassId l : s.labels.labels) {
      if (l != kIgnore && l < classes) counts[l] += 1.0;
    }
  }
  double total = 0.0;
  for (double& c : counts) {
    c = std::max(c, 1.0);
    total += c;
  }
  std::vector<double> w(counts.size(), 1.0);
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const double f = counts[k] / total;
    if (scheme == ClassWeighting::kInverseFrequency) w[k] = 1.0 / f;
    if (scheme == ClassWeighting::kInverseSqrtFrequency) w[k] = 1.0 / std::sqrt(f);
  }
  return normalize_class_weights(w);
}

nlohmann::json TrainHistory::to_json() const {
  nlohmann::json j;
  j["candidate_source"] = candidate_source == CandidateSource::kStrong ? "strong" : "weak";
  j["class_weights"] = class_weights;
  nlohmann::json rows = nlohmann::json::array();
  for (const StepRecord& r : steps) {
    rows.push_back({{"epoch", r.epoch},
                    {"step", r.step},
                    {"lr", r.lr},
                    {"grad_norm_pre", r.grad_norm_pre},
                    {"grad_norm_post", r.grad_norm_post},
                    {"sem", r.sem},
                    {"sifc", r.sifc},
                    {"scc", r.scc},
                    {"nl", r.nl},
                    {"ce", r.ce},
                    {"pen", r.pen},
                    {"fc", r.fc},
                    {"aux_scale", r.aux_scale},
                    {"total", r.total}});
  }
  j["steps"] = rows;
  return j;
}

std::string TrainHistory::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,step,lr,grad_norm_pre,grad_norm_post,sem,sifc,scc,nl,ce,pen,fc,aux_scale,total\n";
  for (const StepRecord& r : steps) {
    os << r.epoch << ',' << r.step << ',' << r.lr << ',' << r.grad_norm_pre << ','
       << r.grad_norm_post << ',' << r.sem << ',' << r.sifc << ',' << r.scc << ',' << r.nl
       << ',' << r.ce << ',' << r.pen << ',' << r.fc << ',' << r.aux_scale << ',' << r.total
       << '\n';
  }
  return os.str();
}

TrainResult train(const ExperimentConfig& cfg, std::span<const Scene> scenes,
                  const std::vector<std::string>& class_names, std::uint64_t seed,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  const NetworkConfig& net = cfg.network;
  net.validate();
  if (scenes.empty()) throw EmptyScene("train: the dataset has no scenes");
  if (class_names.size() != static_cast<std::size_t>(net.classes)) {
    throw ConfigError("train: network.classes does not match the dataset class list");
  }
  for (const Scene& s : scenes) {
    if (s.labels.num_classes != net.classes) {
      throw ConfigError("train: scene class count does not match network.classes");
    }
  }

  TrainResult result{Model::init(net, derive_seed(seed, "network")), {}};
  Model& model = result.model;
  TrainHistory& hist = result.history;
  const TrainConfig& tc = cfg.train;
  const bool full = tc.objective == Objective::kFull;
  hist.candidate_source = full ? select_candidate_source(tc) : CandidateSource::kStrong;
  hist.class_weights = class_weights_from_labels(scenes, net.classes, tc.class_weighting);
  const PolarMixConfig pm = cfg.augment.polarmix(class_names);

  const std::size_t n = scenes.size();
  const std::size_t batch = static_cast<std::size_t>(tc.batch_size);
  const std::size_t batches_per_epoch = (n + batch - 1) / batch;
  const auto total_steps = static_cast<std::int64_t>(batches_per_epoch) * tc.epochs;

  std::vector<Tensor> velocity;
  for (const Parameter& p : model.params()) velocity.emplace_back(p.value.shape());

  Rng order_rng(derive_seed(seed, "epoch-order"));
  const std::uint64_t step_key = derive_seed(seed, "train-step");
  std::int64_t step = 0;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    const std::vector<std::size_t> order = shuffled(n, order_rng);
    for (std::size_t b0 = 0; b0 < n; b0 += batch) {
      const std::size_t b1 = std::min(n, b0 + batch);
      const std::uint64_t key = derive_seed(step_key, static_cast<std::uint64_t>(step));
      Rng pick(derive_seed(key, "partner"));

      Graph g;
      ModelVars m = bind(g, model, true);
      LossComponents sum;
      std::vector<Prototypes> protos;
      for (std::size_t k = b0; k < b1; ++k) {
        const Scene& p = scenes[order[k]];
        // Partner: another member of the batch, or of the dataset when the
        // batch holds a single scene.
        std::size_t partner = order[k];
        if (b1 - b0 > 1) {
          std::size_t j = b0 + pick.below(b1 - b0 - 1);
          if (j >= k) ++j;
          partner = order[j];
        } else if (n > 1) {
          std::size_t j = pick.below(n - 1);
          if (j >= order[k]) ++j;
          partner = j;
        }
        const std::uint64_t scene_key = derive_seed(key, static_cast<std::uint64_t>(k - b0));
        const ViewPair vp = polarmix(p, scenes[partner], pm, derive_seed(scene_key, "mix"));
        const DualViews views = build_views(vp, cfg.augment.grid, cfg.augment.drop_count,
                                            derive_seed(scene_key, "views"));
        SceneTerms t = scene_terms(g, m, views, cfg, hist.class_weights, hist.candidate_source);
        accumulate(sum.sem, t.parts.sem);
        accumulate(sum.sifc, t.parts.sifc);
        accumulate(sum.nl, t.parts.nl);
        accumulate(sum.ce, t.parts.ce);
        accumulate(sum.pen, t.parts.pen);
        accumulate(sum.fc, t.parts.fc);
        for (auto& pr : t.protos) protos.push_back(std::move(pr));
      }
      const double inv = 1.0 / static_cast<double>(b1 - b0);
      LossComponents avg{averaged(sum.sem, inv), averaged(sum.sifc, inv), Var(),
                         averaged(sum.nl, inv),  averaged(sum.ce, inv),   averaged(sum.pen, inv),
                         averaged(sum.fc, inv)};
      if (full) avg.scc = scc(protos, cfg.scc_mode);

      StepRecord rec;
      rec.epoch = epoch;
      rec.step = step;
      rec.lr = cosine_lr(step, total_steps, tc.lr0);
      rec.sem = component_value(avg.sem);
      rec.sifc = component_value(avg.sifc);
      rec.scc = component_value(avg.scc);
      rec.nl = component_value(avg.nl);
      rec.ce = component_value(avg.ce);
      rec.pen = component_value(avg.pen);
      rec.fc = component_value(avg.fc);
      rec.aux_scale = aux_scale(epoch, tc.warmup_epochs);
      if (rec.aux_scale < 1.0) {
        for (Var* v : {&avg.sifc, &avg.scc, &avg.nl, &avg.ce, &avg.pen, &avg.fc}) {
          if (v->valid()) *v = ad::scale(*v, rec.aux_scale);
        }
      }

      Var total;
      try {
        total = total_loss(g, avg, cfg.loss);
      } catch (const NonFinite& e) {
        hist.steps.push_back(rec);
        throw TrainingDiverged(std::string(e.what()) + " at step " + std::to_string(step), hist);
      }
      rec.total = total.value().item();
      g.backward(total);

      std::vector<Tensor> grads;
      grads.reserve(m.v.size());
      for (const Var& v : m.v) grads.push_back(v.grad());
      ClipResult clip;
      try {
        clip = clip_gradients(grads, tc.clip_norm);
      } catch (const NonFinite& e) {
        hist.steps.push_back(rec);
        throw TrainingDiverged(std::string(e.what()) + " at step " + std::to_string(step), hist);
      }
      rec.grad_norm_pre = clip.norm_before;
      rec.grad_norm_post = clip.norm_after;
      hist.steps.push_back(rec);

      for (std::size_t i = 0; i < grads.size(); ++i) {
        Parameter& p = model.params()[i];
        const double wd = p.is_bias ? 0.0 : tc.weight_decay;
        auto theta = p.value.data();
        auto grad = grads[i].data();
        auto vel = velocity[i].data();
        for (std::size_t j = 0; j < theta.size(); ++j) {
          vel[j] = tc.momentum * vel[j] + grad[j] + wd * theta[j];
          theta[j] -= rec.lr * vel[j];
        }
      }
      ++step;
    }
    if (on_epoch) on_epoch(epoch, model);
  }
  return result;
}

}  // namespace lidarnl
