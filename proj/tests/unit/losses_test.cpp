#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <gtest/gtest.h>

#include "lidarnl/augment.hpp"
#include "lidarnl/errors.hpp"
#include "lidarnl/gradcheck.hpp"
#include "lidarnl/losses.hpp"
#include "lidarnl/rng.hpp"
#include "lidarnl/synth.hpp"

namespace lidarnl {
namespace {

using ad::Graph;
using ad::Tensor;
using ad::Var;

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 2.0) {
  Tensor t({r, c});
  for (double& v : t.data()) v = rng.uniform(-scale, scale);
  return t;
}

double softmax_at(const Tensor& x, std::size_t i, std::size_t k) {
  double z = 0;
  for (std::size_t j = 0; j < x.cols(); ++j) z += std::exp(x.at(i, j));
  return std::exp(x.at(i, k)) / z;
}

CandidateSets sets_of(int classes, std::vector<std::uint64_t> bits) {
  CandidateSets s;
  s.classes = classes;
  s.sets = std::move(bits);
  return s;
}

// ---- weighted CE ----------------------------------------------------------

TEST(WeightedCe, UniformLogitsGiveLnC) {
  for (int c : {2, 4, 6, 10}) {
    Graph g;
    const Var logits = g.constant(Tensor({5, static_cast<std::size_t>(c)}, 0.3));
    const std::vector<ClassId> y = {0, 1, 1, 0, 1};
    const std::vector<double> w(static_cast<std::size_t>(c), 1.0);
    EXPECT_NEAR(weighted_ce(logits, y, w).value().item(), std::log(c), 1e-9);
  }
}

TEST(WeightedCe, ConfidentCorrectIsZero) {
  Graph g;
  Tensor x({3, 3});
  const std::vector<ClassId> y = {2, 0, 1};
  for (std::size_t i = 0; i < 3; ++i) x.at(i, y[i]) = 1e6;
  const std::vector<double> w = {1, 1, 1};
  EXPECT_NEAR(weighted_ce(g.constant(x), y, w).value().item(), 0.0, 1e-12);
}

TEST(WeightedCe, HandExampleWithWeights) {
  const Tensor x = Tensor::matrix(3, 3, {1, 0, 0, 0.5, 2, -1, 0, 0, 3});
  const std::vector<ClassId> y = {0, 1, 0};
  const std::vector<double> w = {2, 1, 1};
  // Normalized to mean 1: (1.5, 0.75, 0.75).
  const double expect =
      (1.5 * -std::log(softmax_at(x, 0, 0)) + 0.75 * -std::log(softmax_at(x, 1, 1)) +
       1.5 * -std::log(softmax_at(x, 2, 0))) /
      3.0;
  Graph g;
  EXPECT_NEAR(weighted_ce(g.constant(x), y, w).value().item(), expect, 1e-12);
}

TEST(WeightedCe, IgnoreExcludedAndAllIgnoreIsZero) {
  Graph g;
  const Var x = g.constant(Tensor::matrix(2, 2, {5, 0, 0, 5}));
  const std::vector<double> w = {1, 1};
  const std::vector<ClassId> one = {0, kIgnore};
  const std::vector<ClassId> only = {0};
  Graph g1;
  const double a = weighted_ce(x, one, w).value().item();
  const double b =
      weighted_ce(g1.constant(Tensor::matrix(1, 2, {5, 0})), only, w).value().item();
  EXPECT_NEAR(a, b, 1e-15);
  const std::vector<ClassId> none = {kIgnore, kIgnore};
  EXPECT_EQ(weighted_ce(x, none, w).value().item(), 0.0);
  const std::vector<double> bad_w = {1, 1, 1};
  EXPECT_THROW(weighted_ce(x, one, bad_w), ShapeError);
}

TEST(ClassWeights, NormalizeToMeanOne) {
  const std::vector<double> w = {2, 1, 1};
  EXPECT_EQ(normalize_class_weights(w), (std::vector<double>{1.5, 0.75, 0.75}));
  const std::vector<double> bad = {1, 0};
  EXPECT_THROW(normalize_class_weights(bad), ConfigError);
}

// ---- SIFC -----------------------------------------------------------------

TEST(Sifc, IdenticalIsZeroAndOffsetIsCd) {
  Rng rng(1);
  const Tensor f = random_matrix(6, 4, rng);
  Graph g;
  const std::vector<std::size_t> idx = {0, 1, 2, 3, 4, 5};
  EXPECT_EQ(sifc(g.constant(f), g.constant(f), idx).value().item(), 0.0);
  Tensor shifted = f;
  for (double& v : shifted.data()) v += 0.25;
  EXPECT_NEAR(sifc(g.constant(f), g.constant(shifted), idx).value().item(), 0.25 * 4, 1e-12);
}

TEST(Sifc, TwoPointHandCase) {
  Graph g;
  const Var ws = g.constant(Tensor::matrix(2, 3, {1, 2, 3, 0, 0, 0}));
  const Var wa = g.constant(Tensor::matrix(3, 3, {9, 9, 9, 0, 1, 1, 1, 2, 5}));
  const std::vector<std::size_t> idx = {2, 1};
  // |1-1|+|2-2|+|3-5| = 2 and |0|+|0-1|+|0-1| = 2.
  EXPECT_DOUBLE_EQ(sifc(ws, wa, idx).value().item(), 2.0);
  const std::vector<std::size_t> bad = {5, 0};
  EXPECT_THROW(sifc(ws, wa, bad), ShapeError);
}

TEST(Sifc, SymmetricInArguments) {
  Rng rng(2);
  Graph g;
  const Var a = g.constant(random_matrix(5, 3, rng));
  const Var b = g.constant(random_matrix(5, 3, rng));
  const std::vector<std::size_t> idx = {0, 1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(sifc(a, b, idx).value().item(), sifc(b, a, idx).value().item());
}

// ---- prototypes and SCC -----------------------------------------------------

TEST(Prototypes, MeansAndAbsentRows) {
  Graph g;
  const Var emb = g.constant(Tensor::matrix(5, 2, {1, 2, 3, 4, 10, 0, 20, 2, 7, 7}));
  const std::vector<ClassId> y = {0, 0, 2, 2, kIgnore};
  const Prototypes p = class_prototypes(emb, y, 4);
  EXPECT_EQ(p.present, (std::vector<bool>{true, false, true, false}));
  EXPECT_EQ(p.z.value(), Tensor::matrix(4, 2, {2, 3, 0, 0, 15, 1, 0, 0}));
}

TEST(Prototypes, OnePointPerClass) {
  Graph g;
  const Tensor e = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6});
  const std::vector<ClassId> y = {2, 0, 1};
  const Prototypes p = class_prototypes(g.constant(e), y, 3);
  EXPECT_EQ(p.z.value(), Tensor::matrix(3, 2, {3, 4, 5, 6, 1, 2}));
}

Prototypes make_protos(Graph& g, Tensor z, std::vector<bool> present) {
  return {g.constant(std::move(z)), std::move(present)};
}

TEST(Scc, IdenticalAndDisjointAreZero) {
  Rng rng(3);
  for (SccMode mode : {SccMode::kClassGram, SccMode::kFeatureGram}) {
    Graph g;
    const Tensor z = random_matrix(4, 3, rng);
    const std::vector<Prototypes> same = {make_protos(g, z, {true, true, true, true}),
                                          make_protos(g, z, {true, true, true, true})};
    EXPECT_NEAR(scc(same, mode).value().item(), 0.0, 1e-15);
    const std::vector<Prototypes> disjoint = {
        make_protos(g, random_matrix(4, 3, rng), {true, true, false, false}),
        make_protos(g, random_matrix(4, 3, rng), {false, false, true, true})};
    EXPECT_EQ(scc(disjoint, mode).value().item(), 0.0);
  }
}

TEST(Scc, TwoScansTwoClassesByHand) {
  for (SccMode mode : {SccMode::kClassGram, SccMode::kFeatureGram}) {
    Graph g;
    // Unnormalized inputs; row normalization maps row 1 of the second scan to
    // (a, a) with a = 1/sqrt(2). Class Grams: I vs [[1, a], [a, 1]] -> squared Frobenius 2 * a^2 = 1.
    // Feature Grams: I vs [[1.5, .5], [.5, .5]] -> 4 * 0.25 = 1.
    const std::vector<Prototypes> p = {
        make_protos(g, Tensor::matrix(2, 2, {2, 0, 0, 3}), {true, true}),
        make_protos(g, Tensor::matrix(2, 2, {5, 0, 4, 4}), {true, true})};
    EXPECT_NEAR(scc(p, mode).value().item(), 1.0, 1e-12);
  }
}

TEST(Scc, MaskRestrictsToSharedClasses) {
  Graph g;
  // Class 2 is missing from the second scan so its correlations are ignored.
  const std::vector<Prototypes> p = {
      make_protos(g, Tensor::matrix(3, 2, {1, 0, 0, 1, 1, 1}), {true, true, true}),
      make_protos(g, Tensor::matrix(3, 2, {1, 0, 0, 1, 0, 0}), {true, true, false})};
  EXPECT_NEAR(scc(p, SccMode::kClassGram).value().item(), 0.0, 1e-15);
}

TEST(Scc, SymmetricUnderReordering) {
  Rng rng(4);
  for (SccMode mode : {SccMode::kClassGram, SccMode::kFeatureGram}) {
    Graph g;
    std::vector<Prototypes> p;
    for (int s = 0; s < 4; ++s) {
      std::vector<bool> present = {true, rng.uniform() < 0.7, true, rng.uniform() < 0.5};
      Tensor z = random_matrix(4, 3, rng);
      for (std::size_t c = 0; c < 4; ++c) {
        if (!present[c]) std::fill_n(z.ptr() + c * 3, 3, 0.0);
      }
      p.push_back(make_protos(g, z, present));
    }
    const double forward = scc(p, mode).value().item();
    std::swap(p[0], p[3]);
    std::swap(p[1], p[2]);
    EXPECT_NEAR(scc(p, mode).value().item(), forward, 1e-12);
  }
}

TEST(Scc, NeedsTwoScans) {
  Graph g;
  const std::vector<Prototypes> one = {make_protos(g, Tensor({2, 2}), {true, true})};
  EXPECT_THROW(scc(one), ConfigError);
}

// ---- candidate sets -----------------------------------------------------------

TEST(CandidateSets, AgreeingBranchesGiveSingleton) {
  const Tensor anchor = Tensor::matrix(1, 4, {0, 50, 0, 0});
  const Tensor other = Tensor::matrix(1, 4, {0, 50, 0, 0});
  const std::vector<AlignedBranch> b = {{&other, {0}}, {&other, {0}}};
  const CandidateSets s = build_candidate_sets(anchor, b, 0.9);
  EXPECT_EQ(s.set_size(0), 1);
  EXPECT_TRUE(s.contains(0, 1));
}

TEST(CandidateSets, TauOneKeepsAnchorOnly) {
  const Tensor anchor = Tensor::matrix(1, 4, {0, 1, 0, 0});
  const Tensor other = Tensor::matrix(1, 4, {3, 0, 0, 0});
  const std::vector<AlignedBranch> b = {{&other, {0}}};
  const CandidateSets s = build_candidate_sets(anchor, b, 1.0);
  EXPECT_EQ(s.sets[0], 1U << 1);
}

TEST(CandidateSets, ThreeDisagreeingConfidentBranches) {
  const Tensor anchor = Tensor::matrix(1, 5, {40, 0, 0, 0, 0});
  const Tensor b1 = Tensor::matrix(1, 5, {0, 0, 40, 0, 0});
  const Tensor b2 = Tensor::matrix(1, 5, {0, 0, 0, 0, 40});
  const std::vector<AlignedBranch> b = {{&b1, {0}}, {&b2, {0}}};
  const CandidateSets s = build_candidate_sets(anchor, b, 0.9);
  EXPECT_EQ(s.set_size(0), 3);
  EXPECT_EQ(s.classes - s.set_size(0), 2);
  EXPECT_TRUE(s.contains(0, 0) && s.contains(0, 2) && s.contains(0, 4));
}

TEST(CandidateSets, UnalignedAndIgnoredPoints) {
  const Tensor anchor = Tensor::matrix(2, 3, {1, 0, 0, 0, 0, 1});
  const Tensor other = Tensor::matrix(1, 3, {0, 30, 0});
  const std::vector<AlignedBranch> b = {{&other, {-1, 0}}};
  const std::vector<ClassId> labels = {kIgnore, 1};
  const CandidateSets s = build_candidate_sets(anchor, b, 0.9, labels);
  EXPECT_EQ(s.sets[0], 0U);
  EXPECT_EQ(s.sets[1], (1U << 2) | (1U << 1));
  EXPECT_EQ(s.supervised(), 1U);
  const std::vector<AlignedBranch> bad = {{&other, {0}}};
  EXPECT_THROW(build_candidate_sets(anchor, bad, 0.9), ShapeError);
  EXPECT_THROW(build_candidate_sets(anchor, b, 1.5), ConfigError);
}

TEST(CandidateSets, ArgmaxMembershipSurvivesPositiveRescaling) {
  Rng rng(5);
  const Tensor anchor = random_matrix(20, 5, rng);
  const Tensor other = random_matrix(20, 5, rng);
  std::vector<std::int64_t> rows(20);
  for (std::size_t i = 0; i < 20; ++i) rows[i] = static_cast<std::int64_t>(i);
  const std::vector<AlignedBranch> b = {{&other, rows}};
  Tensor scaled = anchor;
  for (double& v : scaled.data()) v *= 3.7;
  const CandidateSets s1 = build_candidate_sets(anchor, b, 0.0);
  const CandidateSets s2 = build_candidate_sets(scaled, b, 0.0);
  EXPECT_EQ(s1.sets, s2.sets);
}

TEST(CandidateSets, ThreeBranchFormLivesOnAnchorView) {
  SynthConfig sc;
  sc.points = 300;
  PolarMixConfig pm;
  pm.thing_classes = {1, 3};
  const ViewPair vp = polarmix(synth_scene(sc, 1), synth_scene(sc, 2), pm, 3);
  const DualViews v = build_views(vp, {}, 1, 4);
  Rng rng(6);
  const Tensor ls = random_matrix(v.p_sa.size(), 6, rng, 5);
  const Tensor lws = random_matrix(v.p_ws.size(), 6, rng, 5);
  const Tensor lwa = random_matrix(v.p_wa.size(), 6, rng, 5);
  const CandidateSets strong =
      build_candidate_sets(ls, lws, lwa, v, CandidateSource::kStrong, 0.5);
  const CandidateSets weak = build_candidate_sets(ls, lws, lwa, v, CandidateSource::kWeak, 0.5);
  EXPECT_EQ(strong.size(), v.p_sa.size());
  EXPECT_EQ(weak.size(), v.p_wa.size());
  for (std::size_t i = 0; i < strong.size(); ++i) EXPECT_GE(strong.set_size(i), 1);
  for (std::size_t i = 0; i < weak.size(); ++i) {
    EXPECT_GE(weak.set_size(i), 1);
    EXPECT_LE(weak.set_size(i), 3);
  }
}

// ---- NPN --------------------------------------------------------------------

TEST(Npn, UniformSingletonAnalytic) {
  Graph g;
  const Var x = g.constant(Tensor({1, 4}, 0.0));
  const NpnTerms t = npn_terms(x, sets_of(4, {1U << 2}));
  EXPECT_NEAR(t.ce.value().item(), std::log(4.0), 1e-12);
  EXPECT_NEAR(t.nl.value().item(), -3.0 * std::log(0.75), 1e-12);
  EXPECT_NEAR(t.pen.value().item(), -std::log(4.0), 1e-12);
  const LossWeights w;
  EXPECT_NEAR(npn_loss(x, sets_of(4, {1U << 2}), w).value().item(),
              std::log(4.0) - 3.0 * std::log(0.75) - std::log(4.0), 1e-12);
}

TEST(Npn, MassInsideSetGivesZero) {
  Graph g;
  const Var x = g.constant(Tensor::matrix(2, 4, {60, 60, 0, 0, 0, 0, 0, 80}));
  const NpnTerms t = npn_terms(x, sets_of(4, {0b0011, 0b1000}));
  EXPECT_NEAR(t.nl.value().item(), 0.0, 1e-6);
  EXPECT_NEAR(t.ce.value().item(), 0.0, 1e-12);
}

TEST(Npn, RandomTwoPointFormula) {
  Rng rng(7);
  const Tensor x = random_matrix(2, 5, rng);
  const std::vector<std::uint64_t> bits = {0b00101, 0b11000};
  Graph g;
  const NpnTerms t = npn_terms(g.constant(x), sets_of(5, bits));
  double nl = 0, ce = 0, pen = 0;
  for (std::size_t i = 0; i < 2; ++i) {
    double in = 0;
    for (std::size_t c = 0; c < 5; ++c) {
      const double p = softmax_at(x, i, c);
      pen += p * std::log(p);
      if ((bits[i] >> c) & 1U) {
        in += p;
      } else {
        nl -= std::log(1.0 - std::clamp(p, kNpnEps, 1.0 - kNpnEps));
      }
    }
    ce -= std::log(in);
  }
  EXPECT_NEAR(t.nl.value().item(), nl / 2, 1e-12);
  EXPECT_NEAR(t.ce.value().item(), ce / 2, 1e-12);
  EXPECT_NEAR(t.pen.value().item(), pen / 2, 1e-12);
}

TEST(Npn, UnsupervisedPointsAreSkipped) {
  Graph g;
  const Var x = g.constant(Tensor::matrix(2, 3, {1, 2, 3, 9, -9, 0}));
  const NpnTerms both = npn_terms(x, sets_of(3, {0b001, 0}));
  Graph g1;
  const NpnTerms one = npn_terms(g1.constant(Tensor::matrix(1, 3, {1, 2, 3})), sets_of(3, {1}));
  EXPECT_DOUBLE_EQ(both.ce.value().item(), one.ce.value().item());
  const NpnTerms none = npn_terms(x, sets_of(3, {0, 0}));
  EXPECT_EQ(none.nl.value().item(), 0.0);
  EXPECT_THROW(npn_terms(x, sets_of(4, {1, 1})), ShapeError);
}

TEST(Npn, ShiftInvariant) {
  Rng rng(8);
  const Tensor x = random_matrix(6, 4, rng);
  Tensor shifted = x;
  for (std::size_t i = 0; i < 6; ++i) {
    const double s = rng.uniform(-10, 10);
    for (std::size_t c = 0; c < 4; ++c) shifted.at(i, c) += s;
  }
  const CandidateSets sets = sets_of(4, {1, 3, 5, 8, 15, 2});
  const LossWeights w;
  Graph g;
  EXPECT_NEAR(npn_loss(g.constant(x), sets, w).value().item(),
              npn_loss(g.constant(shifted), sets, w).value().item(), 1e-9);
}

TEST(Npn, PenaltyBounded) {
  Rng rng(9);
  for (int t = 0; t < 20; ++t) {
    Graph g;
    const NpnTerms r = npn_terms(g.constant(random_matrix(4, 6, rng, 6)), sets_of(6, {1, 2, 4, 8}));
    EXPECT_LE(r.pen.value().item(), 0.0);
    EXPECT_GE(r.pen.value().item(), -std::log(6.0) - 1e-12);
    EXPECT_GE(r.nl.value().item(), 0.0);
    EXPECT_GE(r.ce.value().item(), 0.0);
  }
}

// ---- FC -----------------------------------------------------------------------

TEST(Fc, IdenticalZeroAntipodalFour) {
  Rng rng(10);
  const Tensor f = random_matrix(4, 3, rng);
  Tensor neg = f;
  for (double& v : neg.data()) v = -v;
  const std::vector<std::size_t> rows = {0, 1, 2, 3};
  Graph g;
  EXPECT_NEAR(fc_loss(g.constant(f), g.constant(f), rows, rows).value().item(), 0.0, 1e-15);
  EXPECT_NEAR(fc_loss(g.constant(f), g.constant(neg), rows, rows).value().item(), 4.0, 1e-12);
}

TEST(Fc, ThreePointHandCase) {
  Graph g;
  const Var a = g.constant(Tensor::matrix(3, 2, {3, 4, 1, 0, 0, 2}));
  const Var b = g.constant(Tensor::matrix(2, 2, {0, 5, 1, 1}));
  const std::vector<std::size_t> ar = {0, 1, 2};
  const std::vector<std::size_t> br = {0, 0, 1};
  // (0.6,0.8) vs (0,1): 0.36 + 0.04 = 0.4; (1,0) vs (0,1): 2;
  // (0,1) vs (r,r), r = 1/sqrt2: r^2 + (1-r)^2 = 2 - sqrt2.
  const double expect = (0.4 + 2.0 + (2.0 - std::sqrt(2.0))) / 3.0;
  EXPECT_NEAR(fc_loss(a, b, ar, br).value().item(), expect, 1e-12);
  EXPECT_NEAR(fc_loss(b, a, br, ar).value().item(), expect, 1e-12);
  const std::vector<std::size_t> bad = {7};
  EXPECT_THROW(fc_loss(a, b, bad, bad), ShapeError);
}

// ---- total --------------------------------------------------------------------

LossComponents constants(Graph& g, const double (&v)[7]) {
  LossComponents c;
  c.sem = g.constant(Tensor::scalar(v[0]));
  c.sifc = g.constant(Tensor::scalar(v[1]));
  c.scc = g.constant(Tensor::scalar(v[2]));
  c.nl = g.constant(Tensor::scalar(v[3]));
  c.ce = g.constant(Tensor::scalar(v[4]));
  c.pen = g.constant(Tensor::scalar(v[5]));
  c.fc = g.constant(Tensor::scalar(v[6]));
  return c;
}

TEST(Total, ZeroLinearAndHandRecombination) {
  Graph g;
  const double zeros[7] = {0, 0, 0, 0, 0, 0, 0};
  EXPECT_EQ(total_loss(g, constants(g, zeros), LossWeights{}).value().item(), 0.0);
  EXPECT_EQ(total_loss(g, LossComponents{}, LossWeights{}).value().item(), 0.0);

  Rng rng(11);
  for (int t = 0; t < 20; ++t) {
    double v[7];
    for (double& x : v) x = rng.uniform(-3, 3);
    LossWeights w{rng.uniform(0, 2), rng.uniform(0, 2), rng.uniform(0, 2), rng.uniform(0, 2),
                  rng.uniform(0, 4)};
    const double hand = v[0] + w.alpha * v[1] + w.beta * v[2] + w.mu * v[3] + w.nu * v[4] + v[5] +
                        w.lambda * v[6];
    const LossComponents c = constants(g, v);
    const double base = total_loss(g, c, w).value().item();
    EXPECT_NEAR(base, hand, 1e-12);
    LossWeights w2 = w;
    w2.lambda *= 2;
    EXPECT_NEAR(total_loss(g, c, w2).value().item() - base, w.lambda * v[6], 1e-12);
  }
}

TEST(Total, NonFiniteComponentThrows) {
  Graph g;
  const double v[7] = {1, 2, std::numeric_limits<double>::quiet_NaN(), 0, 0, 0, 0};
  EXPECT_THROW(total_loss(g, constants(g, v), LossWeights{}), NonFinite);
  LossWeights bad;
  bad.alpha = -1;
  EXPECT_THROW(bad.validate(), ConfigError);
}

// ---- gradients ---------------------------------------------------------------

TEST(LossGradients, SuitePassesAtPinnedTolerance) {
  const GradCheckReport r = run_gradcheck_suite(2024, 20);
  for (const GradCheckCase& c : r.cases) {
    EXPECT_EQ(c.failures, 0) << c.name << " worst " << c.worst;
    EXPECT_LT(c.worst, 1e-4) << c.name;
  }
  EXPECT_TRUE(r.passed());
  EXPECT_GE(r.cases.size(), 8U);
}

}  // namespace
}  // namespace lidarnl
