#ifndef LIDARNL_LOSSES_HPP_
#define LIDARNL_LOSSES_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "lidarnl/augment.hpp"
#include "lidarnl/tensor.hpp"
#include "lidarnl/types.hpp"

namespace lidarnl {

struct LossWeights {
  double alpha = 1.0;   // SIFC
  double beta = 1.0;    // SCC
  double mu = 1.0;      // negative learning
  double nu = 1.0;      // candidate-set CE
  double lambda = 2.0;  // dual-view feature consistency

  void validate() const;
};

// Rescales positive weights to mean 1. ConfigError on non-positive or
// non-finite entries.
std::vector<double> normalize_class_weights(std::span<const double> weights);

// Mean over non-IGNORE points of w[y] * -log softmax(logits)[y], with w
// normalized to mean 1 first. Zero when every label is IGNORE.
ad::Var weighted_ce(ad::Var logits, std::span<const ClassId> labels,
                    std::span<const double> class_weights);

// Mean over weak-sparse points i of ||F_ws[i] - F_wa[idx[i]]||_1.
ad::Var sifc(ad::Var f_ws, ad::Var f_wa, std::span<const std::size_t> idx_ws_in_wa);

struct Prototypes {
  ad::Var z;                  // [C, d']
  std::vector<bool> present;  // class has at least one labeled point
};

Prototypes class_prototypes(ad::Var embeddings, std::span<const ClassId> labels, int classes);

enum class SccMode {
  kClassGram,    // C x C correlation of row-normalized prototypes
  kFeatureGram,  // d' x d' Gram over the classes both scans share
};

// Mean over ordered scan pairs with overlapping classes of the squared
// Frobenius norm of the masked Gram difference. ConfigError with < 2 sets.
ad::Var scc(std::span<const Prototypes> protos, SccMode mode = SccMode::kClassGram);

enum class CandidateSource { kStrong, kWeak };

// Per-point candidate sets as class bitmasks (bit c = class c), so at most
// 64 classes. A zero mask marks a point that receives no NPN supervision.
struct CandidateSets {
  int classes = 0;
  std::vector<std::uint64_t> sets;

  std::size_t size() const { return sets.size(); }
  bool contains(std::size_t i, int c) const { return (sets[i] >> c) & 1U; }
  int set_size(std::size_t i) const;
  std::size_t supervised() const;
};

// Another branch's prediction aligned to the anchor points: rows[i] is the
// row of logits that corresponds to anchor point i, or -1.
struct AlignedBranch {
  const ad::Tensor* logits = nullptr;
  std::vector<std::int64_t> rows;
};

// The anchor argmax always enters a set; an aligned branch's argmax enters
// when its softmax confidence is >= tau. Anchor points labeled IGNORE in
// anchor_labels (if given) get an empty set.
CandidateSets build_candidate_sets(const ad::Tensor& anchor_logits,
                                   std::span<const AlignedBranch> others, double tau,
                                   std::span<const ClassId> anchor_labels = {});

// Three-branch form. The sets live on p_sa points for kStrong and on p_wa
// points for kWeak.
CandidateSets build_candidate_sets(const ad::Tensor& logits_s, const ad::Tensor& logits_ws,
                                   const ad::Tensor& logits_wa, const DualViews& views,
                                   CandidateSource source, double tau);

struct NpnTerms {
  ad::Var nl;   // negative learning on the complement
  ad::Var ce;   // partial-label CE over the candidate set
  ad::Var pen;  // negative entropy
};

inline constexpr double kNpnEps = 1e-7;

// Averages run over supervised points only; all three are zero when none is.
NpnTerms npn_terms(ad::Var logits, const CandidateSets& sets, double eps = kNpnEps);
// mu * nl + nu * ce + pen.
ad::Var npn_loss(ad::Var logits, const CandidateSets& sets, const LossWeights& w);

// Mean squared distance of L2-normalized features over the aligned pairs
// (a_rows[k], b_rows[k]).
ad::Var fc_loss(ad::Var f_a, ad::Var f_b, std::span<const std::size_t> a_rows,
                std::span<const std::size_t> b_rows);

// Unset terms count as zero.
struct LossComponents {
  ad::Var sem, sifc, scc, nl, ce, pen, fc;
};

double component_value(const ad::Var& v);

// sem + alpha*sifc + beta*scc + mu*nl + nu*ce + pen + lambda*fc. Throws
// NonFinite naming the first non-finite component.
ad::Var total_loss(ad::Graph& g, const LossComponents& c, const LossWeights& w);

}  // namespace lidarnl

#endif  // LIDARNL_LOSSES_HPP_
