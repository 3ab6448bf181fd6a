#include "lidarnl/losses.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "lidarnl/errors.hpp"

namespace lidarnl {
namespace {

using ad::Graph;
using ad::Shape;
using ad::Tensor;
using ad::Var;

Var zero(Graph& g) { return g.constant(Tensor::scalar(0.0)); }

void check_finite_weight(double v, const char* name) {
  if (!std::isfinite(v) || v < 0.0) {
    throw ConfigError(std::string("loss weight ") + name + " must be finite and >= 0");
  }
}

// Row-wise mask tensor of a class-pair mask for one ordered scan pair.
Tensor pair_mask(const std::vector<bool>& a, const std::vector<bool>& b, std::size_t& active) {
  const std::size_t c = a.size();
  Tensor m(Shape{c, c});
  active = 0;
  for (std::size_t r = 0; r < c; ++r) {
    for (std::size_t k = 0; k < c; ++k) {
      if (a[r] && b[r] && a[k] && b[k]) {
        m.at(r, k) = 1.0;
        ++active;
      }
    }
  }
  return m;
}

std::size_t argmax_row(const Tensor& logits, std::size_t r, double* confidence) {
  const std::size_t c = logits.cols();
  const double* row = logits.ptr() + r * c;
  const std::size_t best = static_cast<std::size_t>(std::max_element(row, row + c) - row);
  if (confidence != nullptr) {
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - row[best]);
    *confidence = 1.0 / z;
  }
  return best;
}

}  // namespace

void LossWeights::validate() const {
  check_finite_weight(alpha, "alpha");
  check_finite_weight(beta, "beta");
  check_finite_weight(mu, "mu");
  check_finite_weight(nu, "nu");
  check_finite_weight(lambda, "lambda");
}

std::vector<double> normalize_class_weights(std::span<const double> weights) {
  if (weights.empty()) throw ConfigError("class weights are empty");
  double total = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w <= 0.0) throw ConfigError("class weights must be positive");
    total += w;
  }
  const double scale = static_cast<double>(weights.size()) / total;
  std::vector<double> out(weights.begin(), weights.end());
  for (double& w : out) w *= scale;
  return out;
}

Var weighted_ce(Var logits, std::span<const ClassId> labels,
                std::span<const double> class_weights) {
  const Tensor& x = logits.value();
  if (x.rank() != 2 || x.rows() != labels.size()) {
    throw ShapeError("weighted_ce: logits " + ad::to_string(x.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t c = x.cols();
  if (class_weights.size() != c) throw ShapeError("weighted_ce: one weight per class required");
  const std::vector<double> w = normalize_class_weights(class_weights);

  std::vector<std::int64_t> rows;
  std::vector<std::size_t> cols;
  std::vector<double> row_w;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kIgnore) continue;
    if (labels[i] >= c) throw ShapeError("weighted_ce: label out of range");
    rows.push_back(static_cast<std::int64_t>(i));
    cols.push_back(labels[i]);
    row_w.push_back(w[labels[i]]);
  }
  Graph& g = logits.graph();
  if (rows.empty()) return zero(g);
  const double n = static_cast<double>(rows.size());
  Var picked = ad::select_cols(ad::gather_rows(ad::log_softmax(logits), rows), cols);
  Var weighted = ad::mul(picked, g.constant(Tensor::vector(std::move(row_w))));
  return ad::scale(ad::sum(weighted), -1.0 / n);
}

Var sifc(Var f_ws, Var f_wa, std::span<const std::size_t> idx_ws_in_wa) {
  const Tensor& a = f_ws.value();
  const Tensor& b = f_wa.value();
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols() || a.rows() != idx_ws_in_wa.size()) {
    throw ShapeError("sifc: feature shapes " + ad::to_string(a.shape()) + " / " +
                     ad::to_string(b.shape()) + " do not match the index map");
  }
  if (idx_ws_in_wa.empty()) return zero(f_ws.graph());
  std::vector<std::int64_t> rows;
  rows.reserve(idx_ws_in_wa.size());
  for (std::size_t k : idx_ws_in_wa) {
    if (k >= b.rows()) throw ShapeError("sifc: index map points past F_wa");
    rows.push_back(static_cast<std::int64_t>(k));
  }
  return ad::mean(ad::l1_distance(f_ws, ad::gather_rows(f_wa, rows)));
}

Prototypes class_prototypes(Var embeddings, std::span<const ClassId> labels, int classes) {
  const Tensor& e = embeddings.value();
  if (e.rank() != 2 || e.rows() != labels.size()) {
    throw ShapeError("class_prototypes: embeddings do not match the labels");
  }
  Prototypes p;
  p.present.assign(static_cast<std::size_t>(classes), false);
  std::vector<std::int64_t> rows;
  std::vector<std::size_t> bucket;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kIgnore) continue;
    if (labels[i] >= classes) throw ShapeError("class_prototypes: label out of range");
    rows.push_back(static_cast<std::int64_t>(i));
    bucket.push_back(labels[i]);
    p.present[labels[i]] = true;
  }
  p.z = ad::scatter_mean(ad::gather_rows(embeddings, rows), bucket,
                         static_cast<std::size_t>(classes));
  return p;
}

Var scc(std::span<const Prototypes> protos, SccMode mode) {
  if (protos.size() < 2) throw ConfigError("scc needs prototypes from at least two scans");
  const std::size_t c = protos[0].present.size();
  Graph& g = protos[0].z.graph();
  std::vector<Var> zn;
  for (const Prototypes& p : protos) {
    if (p.present.size() != c || p.z.value().rows() != c) {
      throw ShapeError("scc: prototype sets disagree on the class count");
    }
    zn.push_back(ad::l2_normalize_rows(p.z));
  }

  std::vector<Var> class_gram;
  if (mode == SccMode::kClassGram) {
    for (Var z : zn) class_gram.push_back(ad::matmul(z, ad::transpose(z)));
  }

  Var total;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < protos.size(); ++i) {
    for (std::size_t j = i + 1; j < protos.size(); ++j) {
      std::size_t active = 0;
      Tensor mask = pair_mask(protos[i].present, protos[j].present, active);
      if (active == 0) continue;
      Var diff;
      if (mode == SccMode::kClassGram) {
        diff = ad::mul(ad::sub(class_gram[i], class_gram[j]), g.constant(std::move(mask)));
      } else {
        // Zero the rows of classes not shared by both scans, then compare the
        // d' x d' Grams.
        const std::size_t d = zn[i].value().cols();
        Tensor rows(Shape{c, d});
        for (std::size_t r = 0; r < c; ++r) {
          if (mask.at(r, r) != 0.0) std::fill_n(rows.ptr() + r * d, d, 1.0);
        }
        Var keep = g.constant(std::move(rows));
        Var zi = ad::mul(zn[i], keep);
        Var zj = ad::mul(zn[j], keep);
        diff = ad::sub(ad::matmul(ad::transpose(zi), zi), ad::matmul(ad::transpose(zj), zj));
      }
      // (i, j) and (j, i) contribute the same amount.
      Var term = ad::scale(ad::sum(ad::square(diff)), 2.0);
      total = total.valid() ? ad::add(total, term) : term;
      pairs += 2;
    }
  }
  if (pairs == 0) return zero(g);
  return ad::scale(total, 1.0 / static_cast<double>(pairs));
}

int CandidateSets::set_size(std::size_t i) const { return std::popcount(sets[i]); }

std::size_t CandidateSets::supervised() const {
  return static_cast<std::size_t>(
      std::count_if(sets.begin(), sets.end(), [](std::uint64_t s) { return s != 0; }));
}

CandidateSets build_candidate_sets(const Tensor& anchor_logits,
                                   std::span<const AlignedBranch> others, double tau,
                                   std::span<const ClassId> anchor_labels) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("candidate threshold tau must lie in [0, 1]");
  if (anchor_logits.rank() != 2) throw ShapeError("candidate sets: anchor logits must be a matrix");
  const std::size_t n = anchor_logits.rows();
  const std::size_t c = anchor_logits.cols();
  if (c > 64) throw ShapeError("candidate sets support at most 64 classes");
  if (!anchor_labels.empty() && anchor_labels.size() != n) {
    throw ShapeError("candidate sets: anchor labels do not match the anchor logits");
  }
  for (const AlignedBranch& b : others) {
    if (b.logits == nullptr || b.rows.size() != n || b.logits->rank() != 2 ||
        b.logits->cols() != c) {
      throw ShapeError("candidate sets: branch is not aligned to the anchor points");
    }
  }
  CandidateSets out;
  out.classes = static_cast<int>(c);
  out.sets.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!anchor_labels.empty() && anchor_labels[i] == kIgnore) continue;
    std::uint64_t set = std::uint64_t{1} << argmax_row(anchor_logits, i, nullptr);
    for (const AlignedBranch& b : others) {
      const std::int64_t r = b.rows[i];
      if (r < 0) continue;
      if (static_cast<std::size_t>(r) >= b.logits->rows()) {
        throw ShapeError("candidate sets: branch row out of range");
      }
      double conf = 0.0;
      const std::size_t k = argmax_row(*b.logits, static_cast<std::size_t>(r), &conf);
      if (conf >= tau) set |= std::uint64_t{1} << k;
    }
    out.sets[i] = set;
  }
  return out;
}

CandidateSets build_candidate_sets(const Tensor& logits_s, const Tensor& logits_ws,
                                   const Tensor& logits_wa, const DualViews& views,
                                   CandidateSource source, double tau) {
  const std::size_t n_sa = views.p_sa.size();
  const std::size_t n_wa = views.p_wa.size();
  if (logits_s.rows() != n_sa || logits_wa.rows() != n_wa ||
      logits_ws.rows() != views.p_ws.size() || views.sa_origin.size() != n_sa) {
    throw ShapeError("candidate sets: logits do not match the views");
  }
  const std::vector<std::int64_t> wa_to_ws = invert_index_map(views.idx_ws_in_wa, n_wa);
  if (source == CandidateSource::kStrong) {
    AlignedBranch wa{&logits_wa, views.sa_origin};
    AlignedBranch ws{&logits_ws, std::vector<std::int64_t>(n_sa, -1)};
    for (std::size_t i = 0; i < n_sa; ++i) {
      const std::int64_t o = views.sa_origin[i];
      if (o >= 0) ws.rows[i] = wa_to_ws[static_cast<std::size_t>(o)];
    }
    const AlignedBranch branches[] = {std::move(ws), std::move(wa)};
    return build_candidate_sets(logits_s, branches, tau, views.p_sa.labels.labels);
  }
  AlignedBranch ws{&logits_ws, wa_to_ws};
  AlignedBranch s{&logits_s, std::vector<std::int64_t>(n_wa, -1)};
  for (std::size_t i = 0; i < n_sa; ++i) {
    const std::int64_t o = views.sa_origin[i];
    if (o >= 0) s.rows[static_cast<std::size_t>(o)] = static_cast<std::int64_t>(i);
  }
  const AlignedBranch branches[] = {std::move(ws), std::move(s)};
  return build_candidate_sets(logits_wa, branches, tau, views.p_wa.labels.labels);
}

NpnTerms npn_terms(Var logits, const CandidateSets& sets, double eps) {
  const Tensor& x = logits.value();
  if (x.rank() != 2 || x.rows() != sets.size() ||
      x.cols() != static_cast<std::size_t>(sets.classes)) {
    throw ShapeError("npn: logits " + ad::to_string(x.shape()) + " do not match the candidate sets");
  }
  Graph& g = logits.graph();
  const std::size_t c = x.cols();
  std::vector<std::int64_t> rows;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    if (sets.sets[i] != 0) rows.push_back(static_cast<std::int64_t>(i));
  }
  if (rows.empty()) return {zero(g), zero(g), zero(g)};
  const std::size_t n = rows.size();
  const double inv_n = 1.0 / static_cast<double>(n);

  std::vector<std::uint8_t> in_set(n * c);
  std::vector<std::uint8_t> all(n * c, 1);
  Tensor complement(Shape{n, c});
  for (std::size_t k = 0; k < n; ++k) {
    const std::uint64_t s = sets.sets[static_cast<std::size_t>(rows[k])];
    for (std::size_t j = 0; j < c; ++j) {
      in_set[k * c + j] = static_cast<std::uint8_t>((s >> j) & 1U);
      complement.at(k, j) = in_set[k * c + j] ? 0.0 : 1.0;
    }
  }

  Var z = ad::gather_rows(logits, rows);
  Var p = ad::softmax(z);
  Var log_not = ad::log(ad::add_scalar(ad::neg(ad::clamp(p, eps, 1.0 - eps)), 1.0));
  Var nl = ad::scale(ad::sum(ad::mul(log_not, g.constant(std::move(complement)))), -inv_n);

  Var ce = ad::scale(ad::sum(ad::sub(ad::logsumexp_masked(z, in_set),
                                     ad::logsumexp_masked(z, all))),
                     -inv_n);

  Var pen = ad::scale(ad::sum(ad::mul(p, ad::log_softmax(z))), inv_n);
  return {nl, ce, pen};
}

Var npn_loss(Var logits, const CandidateSets& sets, const LossWeights& w) {
  NpnTerms t = npn_terms(logits, sets);
  return ad::add(ad::add(ad::scale(t.nl, w.mu), ad::scale(t.ce, w.nu)), t.pen);
}

Var fc_loss(Var f_a, Var f_b, std::span<const std::size_t> a_rows,
            std::span<const std::size_t> b_rows) {
  const Tensor& a = f_a.value();
  const Tensor& b = f_b.value();
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols() || a_rows.size() != b_rows.size()) {
    throw ShapeError("fc_loss: feature shapes or alignments disagree");
  }
  if (a_rows.empty()) return zero(f_a.graph());
  std::vector<std::int64_t> ra, rb;
  for (std::size_t k = 0; k < a_rows.size(); ++k) {
    if (a_rows[k] >= a.rows() || b_rows[k] >= b.rows()) {
      throw ShapeError("fc_loss: alignment row out of range");
    }
    ra.push_back(static_cast<std::int64_t>(a_rows[k]));
    rb.push_back(static_cast<std::int64_t>(b_rows[k]));
  }
  Var na = ad::l2_normalize_rows(ad::gather_rows(f_a, ra));
  Var nb = ad::l2_normalize_rows(ad::gather_rows(f_b, rb));
  return ad::mean(ad::sq_l2_distance(na, nb));
}

double component_value(const Var& v) { return v.valid() ? v.value().item() : 0.0; }

Var total_loss(Graph& g, const LossComponents& c, const LossWeights& w) {
  w.validate();
  const std::pair<const char*, const Var*> named[] = {
      {"sem", &c.sem}, {"sifc", &c.sifc}, {"scc", &c.scc}, {"nl", &c.nl},
      {"ce", &c.ce},   {"pen", &c.pen},   {"fc", &c.fc}};
  for (const auto& [name, v] : named) {
    if (v->valid() && !std::isfinite(v->value().item())) {
      throw NonFinite(std::string("loss component ") + name + " is not finite");
    }
  }
  const std::pair<const Var*, double> terms[] = {
      {&c.sem, 1.0}, {&c.sifc, w.alpha}, {&c.scc, w.beta}, {&c.nl, w.mu},
      {&c.ce, w.nu}, {&c.pen, 1.0},      {&c.fc, w.lambda}};
  Var total = zero(g);
  for (const auto& [v, k] : terms) {
    if (v->valid()) total = ad::add(total, ad::scale(*v, k));
  }
  return total;
}

}  // namespace lidarnl
