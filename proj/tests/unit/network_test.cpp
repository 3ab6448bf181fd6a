#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>

#include <gtest/gtest.h>

#include "lidarnl/augment.hpp"
#include "lidarnl/checkpoint.hpp"
#include "lidarnl/errors.hpp"
#include "lidarnl/network.hpp"
#include "lidarnl/rng.hpp"
#include "lidarnl/synth.hpp"

namespace lidarnl {
namespace {

using ad::Graph;
using ad::Tensor;
using ad::Var;

Scene make_scene(std::vector<Point3f> pts, int classes = 3) {
  Scene s;
  s.labels.num_classes = classes;
  for (const Point3f& p : pts) {
    s.cloud.points.push_back(p);
    s.labels.labels.push_back(0);
    s.instance_ids.push_back(0);
  }
  return s;
}

NetworkConfig small_cfg() {
  NetworkConfig c;
  c.classes = 4;
  c.hidden = 8;
  c.feature = 6;
  c.metric = 5;
  return c;
}

TEST(Voxelize, OnePointOneVoxel) {
  const VoxelGrid g = voxelize(make_scene({{0.1F, 0.2F, 0.3F}}), 0.4);
  ASSERT_EQ(g.size(), 1U);
  EXPECT_EQ(g.members_of(0).size(), 1U);
  EXPECT_EQ(g.keys[0], (VoxelKey{0, 0, 0}));
}

TEST(Voxelize, TwoPointsSameCell) {
  const VoxelGrid g = voxelize(make_scene({{0.1F, 0.1F, 0.1F}, {0.3F, 0.2F, 0.05F}}), 0.4);
  ASSERT_EQ(g.size(), 1U);
  EXPECT_EQ(g.members_of(0).size(), 2U);
}

TEST(Voxelize, PlanarLatticeMatchesFloorDivision) {
  std::vector<Point3f> pts;
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) {
      pts.push_back({0.05F + 0.5F * i, 0.05F + 0.5F * j, 0.0F});
    }
  }
  const double vs = 1.0;  // two lattice steps
  const VoxelGrid g = voxelize(make_scene(pts), vs);
  EXPECT_EQ(g.size(), 25U);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const VoxelKey k{static_cast<std::int64_t>(std::floor(pts[i].x / vs)),
                     static_cast<std::int64_t>(std::floor(pts[i].y / vs)),
                     static_cast<std::int64_t>(std::floor(pts[i].z / vs))};
    EXPECT_EQ(g.keys[g.point_voxel[i]], k);
  }
  EXPECT_TRUE(std::is_sorted(g.keys.begin(), g.keys.end()));
  // Interior cell of the 5x5 layout has four face neighbors in-plane.
  std::size_t max_nbrs = 0;
  for (std::size_t v = 0; v < g.size(); ++v) {
    max_nbrs = std::max(max_nbrs, g.neighbor_offsets[v + 1] - g.neighbor_offsets[v]);
  }
  EXPECT_EQ(max_nbrs, 4U);
}

TEST(Voxelize, NegativeCoordinatesAndErrors) {
  const VoxelGrid g = voxelize(make_scene({{-0.1F, -0.5F, 0.0F}}), 0.4);
  EXPECT_EQ(g.keys[0], (VoxelKey{-1, -2, 0}));
  EXPECT_THROW(voxelize(make_scene({{0, 0, 0}}), 0.0), ConfigError);
  EXPECT_EQ(voxelize(make_scene({}), 0.4).size(), 0U);
}

TEST(Model, InitRangeAndDeterminism) {
  const NetworkConfig cfg = small_cfg();
  const Model a = Model::init(cfg, 1);
  EXPECT_TRUE(a == Model::init(cfg, 1));
  EXPECT_FALSE(a == Model::init(cfg, 2));
  for (const Parameter& p : a.params()) {
    if (p.is_bias) {
      for (double v : p.value.data()) EXPECT_EQ(v, 0.0);
      continue;
    }
    const double bound = std::sqrt(1.0 / static_cast<double>(p.value.rows()));
    for (double v : p.value.data()) EXPECT_LE(std::abs(v), bound) << p.name;
  }
  EXPECT_EQ(a.param(ParamId::kDec1W).value.shape(), (ad::Shape{12, 8}));
  EXPECT_EQ(a.param(ParamId::kMetricW).value.shape(), (ad::Shape{6, 5}));
  EXPECT_THROW(Model(cfg).param("nope"), ConfigError);
}

TEST(Encode, ZeroWeightsGiveZeroFeatures) {
  const NetworkConfig cfg = small_cfg();
  const Model m(cfg);
  SynthConfig sc;
  sc.points = 200;
  const Scene s = synth_scene(sc, 1);
  Graph g;
  const FeatureSet f = encode(g, s, bind(g, m, false), ViewTag::kRaw);
  EXPECT_EQ(f.per_point.shape(), (ad::Shape{200, 6}));
  EXPECT_EQ(f.per_voxel.shape(), (ad::Shape{f.grid.size(), 6}));
  for (double v : f.per_point.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(Encode, LoneVoxelUsesSelfTermOnly) {
  const NetworkConfig cfg = small_cfg();
  Model m = Model::init(cfg, 3);
  const Scene s = make_scene({{5.0F, 1.0F, 0.5F}});
  Graph g;
  const FeatureSet base = encode(g, s, bind(g, m, false), ViewTag::kRaw);
  // Neighbor weights cannot matter without neighbors.
  for (ParamId id : {ParamId::kMix1Nbr, ParamId::kMix2Nbr}) {
    for (double& v : m.param(id).value.data()) v = 7.0;
  }
  Graph g2;
  const FeatureSet f = encode(g2, s, bind(g2, m, false), ViewTag::kRaw);
  EXPECT_EQ(f.per_voxel.value(), base.per_voxel.value());
}

TEST(Encode, PermutationInvariantPerVoxel) {
  const NetworkConfig cfg = small_cfg();
  const Model m = Model::init(cfg, 4);
  SynthConfig sc;
  sc.points = 500;
  const Scene s = synth_scene(sc, 2);
  std::vector<std::size_t> perm(s.size());
  std::iota(perm.begin(), perm.end(), 0U);
  Rng rng(5);
  for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  const Scene shuffled = s.subset(perm);
  Graph g;
  const ModelVars mv = bind(g, m, false);
  const FeatureSet a = encode(g, s, mv, ViewTag::kRaw);
  const FeatureSet b = encode(g, shuffled, mv, ViewTag::kRaw);
  ASSERT_EQ(a.per_voxel.shape(), b.per_voxel.shape());
  const Tensor& va = a.per_voxel.value();
  const Tensor& vb = b.per_voxel.value();
  for (std::size_t i = 0; i < va.size(); ++i) EXPECT_NEAR(va[i], vb[i], 1e-9);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    EXPECT_EQ(b.grid.point_voxel[i], a.grid.point_voxel[perm[i]]);
  }
}

TEST(Encode, EmptySceneThrows) {
  const Model m = Model::init(small_cfg(), 1);
  Graph g;
  EXPECT_THROW(encode(g, make_scene({}), bind(g, m, false), ViewTag::kRaw), EmptyScene);
}

DualViews synth_views(int drop_count, std::uint64_t seed) {
  SynthConfig sc;
  sc.points = 300;
  PolarMixConfig pm;
  pm.thing_classes = {1, 3};
  const ViewPair vp = polarmix(synth_scene(sc, seed), synth_scene(sc, seed + 100), pm, seed);
  return build_views(vp, {}, drop_count, seed);
}

TEST(Decode, StrongShapeAndZeroSlot) {
  const NetworkConfig cfg = small_cfg();
  const Model m = Model::init(cfg, 6);
  const DualViews v = synth_views(1, 1);
  Graph g;
  const ModelVars mv = bind(g, m, false);
  const FeatureSet ss = encode(g, v.p_ss, mv, ViewTag::kSs);
  const FeatureSet sa = encode(g, v.p_sa, mv, ViewTag::kSa);
  const Var logits = decode_strong(ss, sa, mv, v.idx_ss_in_sa);
  EXPECT_EQ(logits.shape(), (ad::Shape{v.p_sa.size(), 4}));

  // Reference for a dropped point: psi applied to [F_sa, 0].
  const auto inv = invert_index_map(v.idx_ss_in_sa, v.p_sa.size());
  const auto it = std::find(inv.begin(), inv.end(), -1);
  ASSERT_NE(it, inv.end());
  const std::size_t i = static_cast<std::size_t>(it - inv.begin());
  Tensor in({1, 12});
  for (std::size_t k = 0; k < 6; ++k) in.at(0, k) = sa.per_point.value().at(i, k);
  Graph h;
  const ModelVars hv = bind(h, m, false);
  const Var hid = ad::relu(ad::add(ad::matmul(h.constant(in), hv[ParamId::kDec1W]),
                                   ad::broadcast_rows(hv[ParamId::kDec1B], 1)));
  const Var out = ad::add(ad::matmul(hid, hv[ParamId::kDec2W]),
                          ad::broadcast_rows(hv[ParamId::kDec2B], 1));
  for (std::size_t c = 0; c < 4; ++c) {
    EXPECT_NEAR(logits.value().at(i, c), out.value()[c], 1e-12);
  }
  const std::vector<std::size_t> bad = {0, 0};
  EXPECT_THROW(decode_strong(ss, sa, mv, bad), ShapeError);
}

TEST(Decode, WeakNoDropRowsMatch) {
  const Model m = Model::init(small_cfg(), 7);
  const DualViews v = synth_views(0, 2);
  Graph g;
  const ModelVars mv = bind(g, m, false);
  const FeatureSet ws = encode(g, v.p_ws, mv, ViewTag::kWs);
  const FeatureSet wa = encode(g, v.p_wa, mv, ViewTag::kWa);
  const WeakLogits wl = decode_weak(ws, wa, mv, v.idx_ws_in_wa);
  EXPECT_EQ(wl.ws.shape(), (ad::Shape{v.p_ws.size(), 4}));
  EXPECT_EQ(wl.wa.shape(), (ad::Shape{v.p_wa.size(), 4}));
  for (std::size_t i = 0; i < v.p_ws.size(); ++i) {
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_EQ(wl.ws.value().at(i, c), wl.wa.value().at(v.idx_ws_in_wa[i], c));
    }
  }
}

TEST(Decode, SharedDecoderMovesBothBranches) {
  Model m = Model::init(small_cfg(), 8);
  const DualViews v = synth_views(1, 3);
  auto run = [&](const Model& model) {
    Graph g;
    const ModelVars mv = bind(g, model, false);
    const FeatureSet ss = encode(g, v.p_ss, mv, ViewTag::kSs);
    const FeatureSet sa = encode(g, v.p_sa, mv, ViewTag::kSa);
    const FeatureSet ws = encode(g, v.p_ws, mv, ViewTag::kWs);
    const FeatureSet wa = encode(g, v.p_wa, mv, ViewTag::kWa);
    return std::make_pair(decode_strong(ss, sa, mv, v.idx_ss_in_sa).value(),
                          decode_weak(ws, wa, mv, v.idx_ws_in_wa).wa.value());
  };
  const auto before = run(m);
  m.param(ParamId::kDec2B).value[0] += 1.0;
  const auto after = run(m);
  EXPECT_NE(before.first, after.first);
  EXPECT_NE(before.second, after.second);
}

TEST(MetricEmbed, IdentityZeroAndHandMap) {
  NetworkConfig cfg = small_cfg();
  cfg.metric = cfg.feature;
  Model m = Model::init(cfg, 9);
  SynthConfig sc;
  sc.points = 50;
  const Scene s = synth_scene(sc, 4);
  auto& w = m.param(ParamId::kMetricW).value;
  w.fill(0.0);
  for (std::size_t i = 0; i < 6; ++i) w.at(i, i) = 1.0;
  Graph g;
  const ModelVars mv = bind(g, m, false);
  const FeatureSet f = encode(g, s, mv, ViewTag::kRaw);
  EXPECT_EQ(metric_embed(f, mv).value(), f.per_point.value());

  w.fill(0.0);
  Graph g0;
  const ModelVars mv0 = bind(g0, m, false);
  for (double v : metric_embed(encode(g0, s, mv0, ViewTag::kRaw), mv0).value().data()) {
    EXPECT_EQ(v, 0.0);
  }

  // Hand 2x2 linear map on three points.
  NetworkConfig tiny;
  tiny.classes = 2;
  tiny.hidden = 2;
  tiny.feature = 2;
  tiny.metric = 2;
  Model t(tiny);
  t.param(ParamId::kMetricW).value = Tensor::matrix(2, 2, {1, 2, 3, 4});
  Graph gt;
  const ModelVars tv = bind(gt, t, false);
  FeatureSet fake;
  fake.per_point = gt.constant(Tensor::matrix(3, 2, {1, 0, 0, 1, 1, 1}));
  EXPECT_EQ(metric_embed(fake, tv).value(), Tensor::matrix(3, 2, {1, 2, 3, 4, 4, 6}));
}

TEST(Infer, OneHotAndTies) {
  const Tensor one_hot = Tensor::matrix(2, 5, {0, 0, 0, 9, 0, 0, 0, 0, 0, 9});
  EXPECT_EQ(argmax_rows(one_hot), (std::vector<ClassId>{3, 4}));
  const Tensor tie = Tensor::matrix(1, 4, {1, 5, 5, 0});
  EXPECT_EQ(argmax_rows(tie), (std::vector<ClassId>{1}));
}

TEST(Infer, ForcedClassEverywhere) {
  Model m(small_cfg());
  m.param(ParamId::kDec2B).value = Tensor::vector({0, 0, 0, 1});
  SynthConfig sc;
  sc.points = 100;
  const LabelArray out = infer(synth_scene(sc, 5), m);
  ASSERT_EQ(out.size(), 100U);
  for (ClassId l : out.labels) EXPECT_EQ(l, 3);
}

TEST(Infer, WeakOnlyWeightsDoNotAffectInference) {
  Model m = Model::init(small_cfg(), 10);
  SynthConfig sc;
  sc.points = 400;
  const Scene s = synth_scene(sc, 6);
  const Tensor before = infer_logits(s, m);
  Rng rng(11);
  for (double& v : m.param(ParamId::kMetricW).value.data()) v += rng.uniform(-5, 5);
  EXPECT_EQ(infer_logits(s, m), before);
  EXPECT_THROW(infer(make_scene({}), m), EmptyScene);
}

TEST(Forward, FiniteOnFiniteInputs) {
  const Model m = Model::init(NetworkConfig{}, 12);
  SynthConfig sc;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EXPECT_TRUE(infer_logits(synth_scene(sc, seed), m).all_finite());
  }
}

TEST(Checkpoint, RoundTripIsExact) {
  const Model m = Model::init(small_cfg(), 13);
  const Checkpoint ck = make_checkpoint(m, 42, 0xabcdefULL, "network.hidden = 8\n");
  const auto bytes = serialize_checkpoint(ck);
  const Checkpoint back = parse_checkpoint(bytes);
  EXPECT_EQ(back, ck);
  EXPECT_EQ(serialize_checkpoint(back), bytes);
  EXPECT_TRUE(model_from_checkpoint(back, small_cfg()) == m);

  const auto path = std::filesystem::temp_directory_path() / "lidarnl_network_test.ckpt";
  save_checkpoint(path, ck);
  EXPECT_EQ(load_checkpoint(path), ck);
  std::filesystem::remove(path);
}

TEST(Checkpoint, LayoutHeader) {
  const Model m = Model::init(small_cfg(), 14);
  const auto bytes = serialize_checkpoint(make_checkpoint(m, 0x0102030405060708ULL, 9, "x"));
  ASSERT_GT(bytes.size(), 29U);
  EXPECT_EQ(std::string(reinterpret_cast<const char*>(bytes.data()), 8), "LNLCKPT1");
  EXPECT_EQ(bytes[8], std::byte{1});  // version, little-endian u32
  EXPECT_EQ(bytes[12], std::byte{0x08});  // seed low byte
  EXPECT_EQ(bytes[19], std::byte{0x01});  // seed high byte
}

TEST(Checkpoint, RejectsCorruption) {
  const Model m = Model::init(small_cfg(), 15);
  auto bytes = serialize_checkpoint(make_checkpoint(m, 1, 2, "c"));
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_THROW(parse_checkpoint(truncated), LengthError);
  auto bad_magic = bytes;
  bad_magic[0] = std::byte{'X'};
  EXPECT_THROW(parse_checkpoint(bad_magic), ValueError);
  auto trailing = bytes;
  trailing.push_back(std::byte{0});
  EXPECT_THROW(parse_checkpoint(trailing), LengthError);
  NetworkConfig other = small_cfg();
  other.hidden = 9;
  EXPECT_THROW(model_from_checkpoint(parse_checkpoint(bytes), other), ShapeError);
}

}  // namespace
}  // namespace lidarnl
