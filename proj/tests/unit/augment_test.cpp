#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <tuple>

#include <gtest/gtest.h>

#include "lidarnl/augment.hpp"
#include "lidarnl/errors.hpp"
#include "lidarnl/rng.hpp"
#include "lidarnl/synth.hpp"

namespace lidarnl {
namespace {

constexpr double kPi = std::numbers::pi;

Scene random_scene(std::size_t n, int classes, std::uint64_t seed) {
  Rng rng(seed);
  Scene s;
  s.labels.num_classes = classes;
  s.cloud.intensity.emplace();
  for (std::size_t i = 0; i < n; ++i) {
    const double r = rng.uniform(3.0, 30.0);
    const double az = rng.uniform(-kPi, kPi);
    s.cloud.points.push_back({static_cast<float>(r * std::cos(az)),
                              static_cast<float>(r * std::sin(az)),
                              static_cast<float>(rng.uniform(-1.7, 1.0))});
    s.cloud.intensity->push_back(static_cast<float>(rng.uniform()));
    const auto label = static_cast<ClassId>(rng.below(static_cast<std::uint64_t>(classes)));
    s.labels.labels.push_back(label);
    s.instance_ids.push_back(label < 2 ? static_cast<std::uint32_t>(1 + rng.below(4)) : 0U);
  }
  return s;
}

using Key = std::tuple<long, long, long, ClassId>;

std::map<Key, int> point_label_multiset(const Scene& s, double scale = 1000.0) {
  std::map<Key, int> m;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Point3f& p = s.cloud.points[i];
    ++m[{std::lround(p.x * scale), std::lround(p.y * scale), std::lround(p.z * scale),
         s.labels.labels[i]}];
  }
  return m;
}

std::size_t count_in_sector(const Scene& s, double a0, double sigma) {
  std::size_t n = 0;
  for (const Point3f& p : s.cloud.points) {
    // Independent brute-force membership: shift into [0, 2pi) relative to a0.
    double d = std::atan2(static_cast<double>(p.y), static_cast<double>(p.x)) - a0;
    while (d < 0) d += 2 * kPi;
    while (d >= 2 * kPi) d -= 2 * kPi;
    n += d < sigma ? 1 : 0;
  }
  return n;
}

TEST(Sector, WrapsAroundPi) {
  EXPECT_TRUE(in_sector(3.0, 2.9, 0.5));
  EXPECT_TRUE(in_sector(-3.0, 2.9, 0.5));  // 2.9 + 0.5 wraps past pi
  EXPECT_FALSE(in_sector(-2.5, 2.9, 0.5));
  EXPECT_FALSE(in_sector(0.0, 0.0, 0.0));
  EXPECT_TRUE(in_sector(1.0, 0.0, 2 * kPi));
}

TEST(SceneSwap, ZeroSigmaIsIdentity) {
  const Scene p = random_scene(200, 4, 1);
  const Scene q = random_scene(150, 4, 2);
  EXPECT_EQ(scene_swap(p, q, 0.3, 0.0), p);
}

TEST(SceneSwap, SelfSwapIsPermutation) {
  const Scene p = random_scene(300, 4, 3);
  const Scene out = scene_swap(p, p, -1.0, 2.0);
  EXPECT_EQ(out.size(), p.size());
  EXPECT_EQ(point_label_multiset(out), point_label_multiset(p));
}

TEST(SceneSwap, CountMatchesSectorCounting) {
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    const Scene p = random_scene(250, 4, 100 + t);
    const Scene q = random_scene(180, 4, 200 + t);
    const double a0 = rng.uniform(-kPi, kPi);
    const double sigma = rng.uniform(0.0, 2 * kPi);
    const Scene out = scene_swap(p, q, a0, sigma);
    EXPECT_EQ(out.size(), p.size() - count_in_sector(p, a0, sigma) + count_in_sector(q, a0, sigma));
    EXPECT_NO_THROW(out.validate());
  }
}

TEST(RotatePaste, NoThingsIsIdentity) {
  const Scene p = random_scene(100, 4, 5);
  const Scene q = random_scene(100, 4, 6);
  const std::vector<double> angles = {0.5};
  EXPECT_EQ(rotate_paste(p, q, {}, angles), p);
}

TEST(RotatePaste, CountsAndPreservesPlanarRange) {
  const Scene p = random_scene(120, 4, 7);
  const Scene q = random_scene(90, 4, 8);
  const std::vector<ClassId> things = {0, 1};
  const std::vector<double> angles = {0.7, 2.1, 4.0};
  std::size_t m = 0;
  std::vector<std::size_t> src;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q.labels.labels[i] <= 1) {
      ++m;
      src.push_back(i);
    }
  }
  const Scene out = rotate_paste(p, q, things, angles);
  ASSERT_EQ(out.size(), p.size() + angles.size() * m);
  std::uint32_t max_p = *std::max_element(p.instance_ids.begin(), p.instance_ids.end());
  for (std::size_t a = 0; a < angles.size(); ++a) {
    for (std::size_t k = 0; k < m; ++k) {
      const std::size_t o = p.size() + a * m + k;
      const Point3f& s = q.cloud.points[src[k]];
      const Point3f& d = out.cloud.points[o];
      EXPECT_NEAR(std::hypot(d.x, d.y), std::hypot(s.x, s.y), 1e-5);
      EXPECT_EQ(d.z, s.z);
      EXPECT_EQ(out.labels.labels[o], q.labels.labels[src[k]]);
      EXPECT_GT(out.instance_ids[o], max_p);
    }
  }
}

TEST(PolarMix, DisabledIsIdentity) {
  const Scene p = random_scene(150, 4, 9);
  const Scene q = random_scene(150, 4, 10);
  PolarMixConfig cfg;
  cfg.swap = false;
  cfg.paste = false;
  cfg.weak_rotate = false;
  const ViewPair vp = polarmix(p, q, cfg, 1);
  EXPECT_EQ(vp.strong, p);
  EXPECT_EQ(vp.weak, p);
}

TEST(PolarMix, CompositionalCountAndWeakCardinality) {
  const Scene p = random_scene(200, 4, 11);
  const Scene q = random_scene(170, 4, 12);
  PolarMixConfig cfg;
  cfg.thing_classes = {0, 1};
  std::size_t q_things = 0;
  for (ClassId l : q.labels.labels) q_things += l <= 1 ? 1 : 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const ViewPair vp = polarmix(p, q, cfg, seed);
    EXPECT_EQ(vp.weak.size(), p.size());
    // Recover alpha0 from the swap alone and compare with the sector count.
    PolarMixConfig swap_only = cfg;
    swap_only.paste = false;
    const std::size_t swapped = polarmix(p, q, swap_only, seed).strong.size();
    EXPECT_EQ(vp.strong.size(), swapped + 2 * q_things);
    EXPECT_EQ(vp.strong_origin.size(), vp.strong.size());
  }
}

TEST(PolarMix, WeakViewIsRotationWithLabelsAttached) {
  const Scene p = random_scene(300, 4, 13);
  const Scene q = random_scene(300, 4, 14);
  const ViewPair vp = polarmix(p, q, PolarMixConfig{}, 5);
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_EQ(vp.weak.labels.labels[i], p.labels.labels[i]);
    EXPECT_NEAR(std::hypot(vp.weak.cloud.points[i].x, vp.weak.cloud.points[i].y),
                std::hypot(p.cloud.points[i].x, p.cloud.points[i].y), 1e-4);
  }
}

TEST(PolarMix, StrongOriginPointsBackToSource) {
  const Scene p = random_scene(200, 4, 15);
  const Scene q = random_scene(200, 4, 16);
  PolarMixConfig cfg;
  cfg.thing_classes = {0};
  const ViewPair vp = polarmix(p, q, cfg, 3);
  for (std::size_t i = 0; i < vp.strong.size(); ++i) {
    const std::int64_t o = vp.strong_origin[i];
    if (o < 0) continue;
    EXPECT_EQ(vp.strong.cloud.points[i], p.cloud.points[static_cast<std::size_t>(o)]);
  }
}

TEST(PolarMix, WeakCardinalityOverManyDraws) {
  SynthConfig sc;
  sc.points = 200;
  PolarMixConfig cfg;
  cfg.thing_classes = {1, 3};
  Rng rng(17);
  for (int t = 0; t < 1000; ++t) {
    const Scene p = random_scene(50 + rng.below(100), 4, rng.next());
    const Scene q = random_scene(50 + rng.below(100), 4, rng.next());
    ASSERT_EQ(polarmix(p, q, cfg, rng.next()).weak.size(), p.size());
  }
}

TEST(RangeProject, HorizonPointIsMidRow) {
  Scene s = random_scene(0, 2, 1);
  s.cloud.points = {{10.0F, 0.0F, 0.0F}};
  s.labels.labels = {0};
  s.instance_ids = {0};
  s.cloud.intensity = std::vector<float>{0.0F};
  const RangeGrid g = range_project(s, {16, 512, 10.0, -10.0});
  EXPECT_EQ(g.row[0], 8);
  EXPECT_EQ(g.col[0], 256);  // azimuth 0 maps to the middle bin
}

TEST(RangeProject, EqualElevationSharesRow) {
  Scene s;
  s.labels.num_classes = 2;
  for (int k = 0; k < 36; ++k) {
    const double az = k * 2 * kPi / 36;
    s.cloud.points.push_back({static_cast<float>(5 * std::cos(az)),
                              static_cast<float>(5 * std::sin(az)), -1.0F});
    s.labels.labels.push_back(0);
    s.instance_ids.push_back(0);
  }
  const RangeGrid g = range_project(s, {});
  for (int r : g.row) EXPECT_EQ(r, g.row[0]);
}

TEST(RangeProject, HistogramMatchesBruteForce) {
  const Scene s = random_scene(2000, 4, 18);
  const RangeGridConfig cfg{};
  const RangeGrid g = range_project(s, cfg);
  std::vector<std::size_t> hist(static_cast<std::size_t>(cfg.rows), 0);
  for (const Point3f& p : s.cloud.points) {
    const double r = std::sqrt(double(p.x) * p.x + double(p.y) * p.y + double(p.z) * p.z);
    const double elev_deg = std::asin(p.z / r) * 180.0 / kPi;
    const double frac = (cfg.fov_up_deg - elev_deg) / (cfg.fov_up_deg - cfg.fov_down_deg);
    const int row = std::clamp(static_cast<int>(std::floor(frac * cfg.rows)), 0, cfg.rows - 1);
    ++hist[static_cast<std::size_t>(row)];
  }
  EXPECT_EQ(g.row_histogram(), hist);
  for (int c : g.col) {
    EXPECT_GE(c, 0);
    EXPECT_LT(c, cfg.cols);
  }
}

TEST(RangeProject, OriginIsDegenerate) {
  Scene s;
  s.labels.num_classes = 2;
  s.cloud.points = {{0, 0, 0}};
  s.labels.labels = {0};
  s.instance_ids = {0};
  EXPECT_THROW(range_project(s, {}), DegenerateError);
}

TEST(RowDrop, ZeroIsIdentity) {
  const Scene s = random_scene(100, 4, 19);
  const RowDropResult r = row_drop(s, range_project(s, {}), 0, 1);
  EXPECT_EQ(r.scene, s);
  for (std::size_t i = 0; i < r.index_map.size(); ++i) EXPECT_EQ(r.index_map[i], i);
}

TEST(RowDrop, SingleRowSceneDropsToEmpty) {
  Scene s;
  s.labels.num_classes = 2;
  for (int k = 0; k < 10; ++k) {
    s.cloud.points.push_back({static_cast<float>(5 + k), 0.0F, 0.0F});
    s.labels.labels.push_back(1);
    s.instance_ids.push_back(0);
  }
  const RangeGrid g = range_project(s, {2, 8, 10.0, -10.0});
  const RowDropResult r = row_drop(s, g, 1, 0);
  // Either the occupied row was dropped or the empty one was.
  if (r.dropped_rows[0] == g.row[0]) {
    EXPECT_EQ(r.scene.size(), 0U);
  } else {
    EXPECT_EQ(r.scene.size(), s.size());
  }
  bool emptied = false;
  for (std::uint64_t seed = 0; seed < 20 && !emptied; ++seed) {
    emptied = row_drop(s, g, 1, seed).scene.size() == 0;
  }
  EXPECT_TRUE(emptied);
}

TEST(RowDrop, CountFromHistogramAndMonotoneMap) {
  const Scene s = random_scene(1500, 4, 20);
  const RangeGrid g = range_project(s, {});
  const auto hist = g.row_histogram();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const RowDropResult r = row_drop(s, g, 3, seed);
    ASSERT_EQ(r.dropped_rows.size(), 3U);
    std::size_t removed = 0;
    for (int row : r.dropped_rows) removed += hist[static_cast<std::size_t>(row)];
    EXPECT_EQ(r.scene.size(), s.size() - removed);
    for (std::size_t i = 1; i < r.index_map.size(); ++i) {
      ASSERT_LT(r.index_map[i - 1], r.index_map[i]);
    }
    EXPECT_TRUE(std::is_sorted(r.dropped_rows.begin(), r.dropped_rows.end()));
  }
  EXPECT_THROW(row_drop(s, g, 16, 0), ConfigError);
}

TEST(BuildViews, ZeroDropKeepsViews) {
  const Scene p = random_scene(200, 4, 21);
  const Scene q = random_scene(200, 4, 22);
  const ViewPair vp = polarmix(p, q, PolarMixConfig{}, 1);
  const DualViews v = build_views(vp, {}, 0, 2);
  EXPECT_EQ(v.p_ss, v.p_sa);
  EXPECT_EQ(v.p_ws, v.p_wa);
  EXPECT_EQ(v.p_sa, vp.strong);
  EXPECT_EQ(v.p_wa, vp.weak);
}

TEST(BuildViews, IndexMapsComposeAndAlign) {
  SynthConfig sc;
  PolarMixConfig cfg;
  cfg.thing_classes = {1, 3};
  for (std::uint64_t t = 0; t < 10; ++t) {
    const Scene p = synth_scene(sc, 2 * t);
    const Scene q = synth_scene(sc, 2 * t + 1);
    const ViewPair vp = polarmix(p, q, cfg, t);
    const DualViews v = build_views(vp, {}, 1, t);
    ASSERT_EQ(v.idx_ss_in_sa.size(), v.p_ss.size());
    for (std::size_t i = 0; i < v.p_ss.size(); ++i) {
      ASSERT_EQ(v.p_ss.cloud.points[i], v.p_sa.cloud.points[v.idx_ss_in_sa[i]]);
      ASSERT_EQ(v.p_ss.labels.labels[i], v.p_sa.labels.labels[v.idx_ss_in_sa[i]]);
    }
    for (std::size_t i = 0; i < v.p_ws.size(); ++i) {
      ASSERT_EQ(v.p_ws.cloud.points[i], v.p_wa.cloud.points[v.idx_ws_in_wa[i]]);
    }
    ASSERT_EQ(v.sa_origin.size(), v.p_sa.size());
    for (std::size_t i = 0; i < v.p_sa.size(); ++i) {
      const std::int64_t w = v.sa_origin[i];
      if (w < 0) continue;
      EXPECT_EQ(v.p_sa.labels.labels[i], v.p_wa.labels.labels[static_cast<std::size_t>(w)]);
    }
  }
}

TEST(BuildViews, OccupiedDropShrinksWeakView) {
  const Scene p = random_scene(800, 4, 23);
  const Scene q = random_scene(800, 4, 24);
  const ViewPair vp = polarmix(p, q, PolarMixConfig{}, 7);
  const auto hist = range_project(vp.weak, {}).row_histogram();
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const DualViews v = build_views(vp, {}, 1, seed);
    const std::size_t lost = v.p_wa.size() - v.p_ws.size();
    // The lost count is exactly one row's occupancy.
    EXPECT_NE(std::find(hist.begin(), hist.end(), lost), hist.end());
  }
}

TEST(InvertIndexMap, RoundTrip) {
  const std::vector<std::size_t> map = {0, 2, 3, 7};
  const auto inv = invert_index_map(map, 8);
  EXPECT_EQ(inv, (std::vector<std::int64_t>{0, -1, 1, 2, -1, -1, -1, 3}));
}

TEST(Augment, Deterministic) {
  const Scene p = random_scene(300, 4, 25);
  const Scene q = random_scene(300, 4, 26);
  const ViewPair a = polarmix(p, q, PolarMixConfig{}, 9);
  const ViewPair b = polarmix(p, q, PolarMixConfig{}, 9);
  EXPECT_EQ(a.strong, b.strong);
  EXPECT_EQ(a.weak, b.weak);
  const DualViews va = build_views(a, {}, 1, 4);
  const DualViews vb = build_views(b, {}, 1, 4);
  EXPECT_EQ(va.p_ss, vb.p_ss);
  EXPECT_EQ(va.idx_ws_in_wa, vb.idx_ws_in_wa);
}

}  // namespace
}  // namespace lidarnl
