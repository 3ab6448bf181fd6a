#include "lidarnl/augment.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

#include "lidarnl/errors.hpp"
#include "lidarnl/rng.hpp"

namespace lidarnl {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double azimuth_of(const Point3f& p) {
  return std::atan2(static_cast<double>(p.y), static_cast<double>(p.x));
}

struct SwapResult {
  Scene scene;
  std::vector<std::int64_t> origin;  // index in p or -1
};

SwapResult swap_with_origin(const Scene& p, const Scene& q, double alpha0, double sigma) {
  if (!(sigma >= 0.0 && sigma <= kTwoPi)) {
    throw ConfigError("scene_swap: sigma must lie in [0, 2*pi]");
  }
  SwapResult out{p.empty_like(), {}};
  out.scene.cloud.points.reserve(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!in_sector(azimuth_of(p.cloud.points[i]), alpha0, sigma)) {
      out.scene.push_point_from(p, i);
      out.origin.push_back(static_cast<std::int64_t>(i));
    }
  }
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (in_sector(azimuth_of(q.cloud.points[i]), alpha0, sigma)) {
      out.scene.push_point_from(q, i);
      out.origin.push_back(-1);
    }
  }
  return out;
}

Point3f rotated(const Point3f& p, double c, double s) {
  const double x = p.x;
  const double y = p.y;
  return {static_cast<float>(c * x - s * y), static_cast<float>(s * x + c * y), p.z};
}

}  // namespace

bool in_sector(double azimuth, double alpha0, double sigma) {
  if (sigma <= 0.0) return false;
  if (sigma >= kTwoPi) return true;
  double d = std::fmod(azimuth - alpha0, kTwoPi);
  if (d < 0.0) d += kTwoPi;
  return d < sigma;
}

Scene scene_swap(const Scene& p, const Scene& q, double alpha0, double sigma) {
  return swap_with_origin(p, q, alpha0, sigma).scene;
}

Scene rotate_paste(const Scene& p, const Scene& q, std::span<const ClassId> thing_classes,
                   std::span<const double> angles) {
  if (thing_classes.empty()) return p;
  if (angles.empty()) {
    throw ConfigError("rotate_paste: thing classes given without paste angles");
  }
  Scene out = p;
  std::uint32_t next_id = 1;
  for (std::uint32_t id : p.instance_ids) next_id = std::max(next_id, id + 1);

  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const ClassId l = q.labels.labels[i];
    if (std::find(thing_classes.begin(), thing_classes.end(), l) != thing_classes.end()) {
      members.push_back(i);
    }
  }
  for (double theta : angles) {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    std::map<std::uint32_t, std::uint32_t> fresh;
    for (std::size_t i : members) {
      const auto [it, inserted] = fresh.try_emplace(q.instance_ids[i], next_id);
      if (inserted) ++next_id;
      out.push_point_from(q, i);
      out.cloud.points.back() = rotated(q.cloud.points[i], c, s);
      out.instance_ids.back() = it->second;
    }
  }
  return out;
}

Scene rotate_z(const Scene& p, double angle) {
  Scene out = p;
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  for (auto& pt : out.cloud.points) pt = rotated(pt, c, s);
  return out;
}

void PolarMixConfig::validate() const {
  if (!(sigma >= 0.0 && sigma <= kTwoPi)) {
    throw ConfigError("polarmix: sigma must lie in [0, 2*pi]");
  }
  if (paste && !thing_classes.empty() && paste_angles < 1) {
    throw ConfigError("polarmix: paste needs at least one angle");
  }
}

ViewPair polarmix(const Scene& p, const Scene& q, const PolarMixConfig& cfg,
                  std::uint64_t seed) {
  cfg.validate();
  Rng rng(derive_seed(seed, "polarmix"));
  const double alpha0 = rng.uniform(-std::numbers::pi, std::numbers::pi);
  std::vector<double> angles(static_cast<std::size_t>(std::max(cfg.paste_angles, 0)));
  for (double& a : angles) a = rng.uniform(0.0, kTwoPi);
  const double weak_angle = rng.uniform(0.0, kTwoPi);

  ViewPair vp;
  if (cfg.swap) {
    SwapResult sw = swap_with_origin(p, q, alpha0, cfg.sigma);
    vp.strong = std::move(sw.scene);
    vp.strong_origin = std::move(sw.origin);
  } else {
    vp.strong = p;
    vp.strong_origin.resize(p.size());
    std::iota(vp.strong_origin.begin(), vp.strong_origin.end(), std::int64_t{0});
  }
  if (cfg.paste && !cfg.thing_classes.empty()) {
    vp.strong = rotate_paste(vp.strong, q, cfg.thing_classes, angles);
    vp.strong_origin.resize(vp.strong.size(), -1);
  }
  vp.weak = cfg.weak_rotate ? rotate_z(p, weak_angle) : p;
  return vp;
}

void RangeGridConfig::validate() const {
  if (rows < 2) throw ConfigError("range grid: rows must be >= 2");
  if (cols < 1) throw ConfigError("range grid: cols must be >= 1");
  if (!(fov_up_deg > fov_down_deg)) {
    throw ConfigError("range grid: fov_up_deg must exceed fov_down_deg");
  }
}

std::vector<std::size_t> RangeGrid::row_histogram() const {
  std::vector<std::size_t> h(static_cast<std::size_t>(rows), 0);
  for (int r : row) ++h[static_cast<std::size_t>(r)];
  return h;
}

RangeGrid range_project(const Scene& p, const RangeGridConfig& cfg) {
  cfg.validate();
  RangeGrid grid;
  grid.rows = cfg.rows;
  grid.cols = cfg.cols;
  grid.row.resize(p.size());
  grid.col.resize(p.size());
  const double span = cfg.fov_up_deg - cfg.fov_down_deg;
  const double rad2deg = 180.0 / std::numbers::pi;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Point3f& pt = p.cloud.points[i];
    const double x = pt.x;
    const double y = pt.y;
    const double z = pt.z;
    const double r = std::sqrt(x * x + y * y + z * z);
    if (!(r > 0.0)) {
      throw DegenerateError("range_project: point " + std::to_string(i) +
                            " sits at the sensor origin");
    }
    const double elevation = std::asin(std::clamp(z / r, -1.0, 1.0)) * rad2deg;
    const double v = std::floor((cfg.fov_up_deg - elevation) / span * cfg.rows);
    const double u = std::floor((std::atan2(y, x) + std::numbers::pi) / kTwoPi * cfg.cols);
    grid.row[i] = static_cast<int>(std::clamp(v, 0.0, static_cast<double>(cfg.rows - 1)));
    grid.col[i] = static_cast<int>(std::clamp(u, 0.0, static_cast<double>(cfg.cols - 1)));
  }
  return grid;
}

RowDropResult row_drop(const Scene& p, const RangeGrid& grid, int drop_count,
                       std::uint64_t seed) {
  if (drop_count < 0 || drop_count >= grid.rows) {
    throw ConfigError("row_drop: drop_count must lie in [0, rows)");
  }
  if (grid.row.size() != p.size()) {
    throw ShapeError("row_drop: grid does not belong to this scene");
  }
  // Partial Fisher-Yates over the row ids.
  std::vector<int> rows(static_cast<std::size_t>(grid.rows));
  std::iota(rows.begin(), rows.end(), 0);
  Rng rng(derive_seed(seed, "row-drop"));
  for (int k = 0; k < drop_count; ++k) {
    const auto j = static_cast<std::size_t>(k) +
                   rng.below(static_cast<std::uint64_t>(grid.rows - k));
    std::swap(rows[static_cast<std::size_t>(k)], rows[j]);
  }
  RowDropResult out;
  out.dropped_rows.assign(rows.begin(), rows.begin() + drop_count);
  std::sort(out.dropped_rows.begin(), out.dropped_rows.end());

  std::vector<bool> dropped(static_cast<std::size_t>(grid.rows), false);
  for (int r : out.dropped_rows) dropped[static_cast<std::size_t>(r)] = true;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!dropped[static_cast<std::size_t>(grid.row[i])]) out.index_map.push_back(i);
  }
  out.scene = p.subset(out.index_map);
  return out;
}

DualViews build_views(const ViewPair& vp, const RangeGridConfig& grid, int drop_count,
                      std::uint64_t seed) {
  if (vp.strong_origin.size() != vp.strong.size()) {
    throw ShapeError("build_views: strong origin map has the wrong length");
  }
  RowDropResult strong = row_drop(vp.strong, range_project(vp.strong, grid), drop_count,
                                  derive_seed(seed, "strong-sparsity"));
  RowDropResult weak = row_drop(vp.weak, range_project(vp.weak, grid), drop_count,
                                derive_seed(seed, "weak-sparsity"));
  DualViews v;
  v.p_sa = vp.strong;
  v.p_wa = vp.weak;
  v.p_ss = std::move(strong.scene);
  v.p_ws = std::move(weak.scene);
  v.idx_ss_in_sa = std::move(strong.index_map);
  v.idx_ws_in_wa = std::move(weak.index_map);
  v.sa_origin = vp.strong_origin;
  for (auto& o : v.sa_origin) {
    if (o >= static_cast<std::int64_t>(vp.weak.size())) o = -1;
  }
  return v;
}

std::vector<std::int64_t> invert_index_map(std::span<const std::size_t> map,
                                           std::size_t parent_size) {
  std::vector<std::int64_t> inv(parent_size, -1);
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (map[i] >= parent_size) throw ShapeError("index map points past its parent");
    inv[map[i]] = static_cast<std::int64_t>(i);
  }
  return inv;
}

}  // namespace lidarnl
