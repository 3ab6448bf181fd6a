#include "lidarnl/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string_view>

#include "lidarnl/errors.hpp"
#include "lidarnl/rng.hpp"

namespace lidarnl {
namespace {

// Kinds in spawn priority order; class id = position when active.
enum Kind : int {
  kRoad = 0,
  kCar,
  kVegetation,
  kPedestrian,
  kSidewalk,
  kTerrain,
  kTruck,
  kBicycle,
  kOtherVehicle,
  kMotorcycle,
  kKindCount
};

constexpr std::array<std::string_view, kKindCount> kKindNames = {
    "drivable-surface", "car",     "vegetation", "pedestrian",    "sidewalk",
    "terrain",          "truck",   "bicycle",    "other-vehicle", "motorcycle"};

constexpr std::array<float, kKindCount> kKindIntensity = {
    0.10F, 0.70F, 0.45F, 0.35F, 0.25F, 0.30F, 0.65F, 0.55F, 0.60F, 0.60F};

constexpr double kRoadHalfWidth = 4.0;
constexpr double kSidewalkOuter = 6.5;
constexpr double kSidewalkRise = 0.15;
constexpr double kTerrainRise = 0.30;
constexpr double kInf = std::numeric_limits<double>::infinity();

struct Vec3 {
  double x, y, z;
};

struct Hit {
  double t = kInf;
  int kind = -1;
  std::uint32_t instance = 0;
};

struct Box {
  double cx, cy, z0, half_l, half_w, height, yaw;
  int kind;
  std::uint32_t instance;
};

struct Cylinder {
  double cx, cy, z0, z1, radius;
  int kind;
  std::uint32_t instance;
};

struct Sphere {
  double cx, cy, cz, radius;
  int kind;
  std::uint32_t instance;
};

class World {
 public:
  World(const SynthConfig& cfg, Rng& rng) : cfg_(cfg) {
    for (int k = 0; k < kKindCount; ++k) active_[k] = k < cfg.classes;
    road_offset_ = rng.uniform(-1.5, 1.5);
    populate(rng);
  }

  int ground_kind_at(double y) const {
    const double d = std::abs(y - road_offset_);
    if (d < kRoadHalfWidth) return kRoad;
    if (d < kSidewalkOuter) {
      if (active_[kSidewalk]) return kSidewalk;
      if (active_[kTerrain]) return kTerrain;
      return kRoad;
    }
    if (active_[kTerrain]) return kTerrain;
    if (active_[kSidewalk]) return kSidewalk;
    return kRoad;
  }

  double ground_z(int kind) const {
    const double base = -cfg_.sensor_height;
    if (kind == kSidewalk) return base + kSidewalkRise;
    if (kind == kTerrain) return base + kTerrainRise;
    return base;
  }

  Hit cast(const Vec3& d) const {
    Hit best;
    if (d.z < 0.0) {
      for (int kind : {kRoad, kSidewalk, kTerrain}) {
        const double t = ground_z(kind) / d.z;
        if (t <= 0.0 || t >= best.t) continue;
        if (ground_kind_at(t * d.y) == kind) best = {t, kind, 0};
      }
    }
    for (const Box& b : boxes_) {
      const double t = intersect(b, d);
      if (t < best.t) best = {t, b.kind, b.instance};
    }
    for (const Cylinder& c : cylinders_) {
      const double t = intersect(c, d);
      if (t < best.t) best = {t, c.kind, c.instance};
    }
    for (const Sphere& s : spheres_) {
      const double t = intersect(s, d);
      if (t < best.t) best = {t, s.kind, s.instance};
    }
    return best;
  }

 private:
  // Rejects footprints that overlap an existing object or the sensor.
  bool place(double x, double y, double r) {
    if (std::hypot(x, y) < r + 2.5) return false;
    for (const auto& [fx, fy, fr] : footprints_) {
      if (std::hypot(x - fx, y - fy) < r + fr + 0.3) return false;
    }
    footprints_.push_back({x, y, r});
    return true;
  }

  template <typename Spawn>
  static void scatter(int count, Spawn&& spawn) {
    for (int i = 0; i < count; ++i) {
      for (int attempt = 0; attempt < 50; ++attempt) {
        if (spawn()) break;
      }
    }
  }

  void add_vehicle(Rng& rng, int kind, double length, double width,
                   double height, double lane_min, double lane_max) {
    scatter(1, [&] {
      const double x = rng.uniform(-cfg_.max_range * 0.8, cfg_.max_range * 0.8);
      const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
      const double y = road_offset_ + side * rng.uniform(lane_min, lane_max);
      const double l = length * rng.uniform(0.9, 1.1);
      const double w = width * rng.uniform(0.92, 1.08);
      const double h = height * rng.uniform(0.92, 1.08);
      if (!place(x, y, 0.5 * std::hypot(l, w))) return false;
      const double yaw = (side < 0.0 ? 0.0 : std::numbers::pi) +
                         rng.uniform(-0.12, 0.12);
      boxes_.push_back({x, y, ground_z(ground_kind_at(y)), 0.5 * l, 0.5 * w, h,
                        yaw, kind, next_instance_++});
      return true;
    });
  }

  void populate(Rng& rng) {
    const auto count = [&](int lo, int hi) {
      return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
    };
    const double sidewalk_mid = 0.5 * (kRoadHalfWidth + kSidewalkOuter);

    if (active_[kCar]) {
      const int n = count(4, 7);
      for (int i = 0; i < n; ++i) add_vehicle(rng, kCar, 4.2, 1.8, 1.5, 1.2, 3.0);
    }
    if (active_[kTruck]) {
      const int n = count(1, 2);
      for (int i = 0; i < n; ++i) add_vehicle(rng, kTruck, 8.0, 2.5, 3.2, 1.5, 2.5);
    }
    if (active_[kOtherVehicle]) {
      const int n = count(0, 2);
      for (int i = 0; i < n; ++i)
        add_vehicle(rng, kOtherVehicle, 11.0, 2.6, 3.0, 1.5, 2.5);
    }
    if (active_[kBicycle]) {
      const int n = count(1, 3);
      for (int i = 0; i < n; ++i) add_vehicle(rng, kBicycle, 1.7, 0.5, 1.1, 3.2, 3.7);
    }
    if (active_[kMotorcycle]) {
      const int n = count(1, 2);
      for (int i = 0; i < n; ++i)
        add_vehicle(rng, kMotorcycle, 2.1, 0.8, 1.3, 1.0, 3.0);
    }
    if (active_[kPedestrian]) {
      const int n = count(3, 7);
      scatter(n, [&] {
        const double x = rng.uniform(-cfg_.max_range * 0.7, cfg_.max_range * 0.7);
        const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
        const double y = road_offset_ + side * (sidewalk_mid + rng.uniform(-0.9, 0.9));
        const double r = rng.uniform(0.25, 0.35);
        if (!place(x, y, r)) return false;
        const double z0 = ground_z(ground_kind_at(y));
        cylinders_.push_back(
            {x, y, z0, z0 + rng.uniform(1.55, 1.9), r, kPedestrian, next_instance_++});
        return true;
      });
    }
    if (active_[kVegetation]) {
      const int trees = count(5, 10);
      scatter(trees, [&] {
        const double x = rng.uniform(-cfg_.max_range * 0.9, cfg_.max_range * 0.9);
        const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
        const double y = road_offset_ + side * rng.uniform(kSidewalkOuter + 1.0, 16.0);
        const double crown = rng.uniform(1.4, 2.4);
        if (!place(x, y, crown)) return false;
        const double z0 = ground_z(ground_kind_at(y));
        const double trunk = rng.uniform(1.8, 2.8);
        cylinders_.push_back({x, y, z0, z0 + trunk, 0.2, kVegetation, 0});
        spheres_.push_back({x, y, z0 + trunk + 0.7 * crown, crown, kVegetation, 0});
        return true;
      });
      const int bushes = count(3, 6);
      scatter(bushes, [&] {
        const double x = rng.uniform(-cfg_.max_range * 0.9, cfg_.max_range * 0.9);
        const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
        const double y = road_offset_ + side * rng.uniform(kSidewalkOuter + 0.8, 14.0);
        const double r = rng.uniform(0.6, 1.1);
        if (!place(x, y, r)) return false;
        spheres_.push_back(
            {x, y, ground_z(ground_kind_at(y)) + 0.5 * r, r, kVegetation, 0});
        return true;
      });
    }
  }

  static double intersect(const Box& b, const Vec3& d) {
    // Ray origin is the sensor at (0,0,0); move into the box frame.
    const double c = std::cos(-b.yaw);
    const double s = std::sin(-b.yaw);
    const double ox = c * (-b.cx) - s * (-b.cy);
    const double oy = s * (-b.cx) + c * (-b.cy);
    const double oz = -b.z0;
    const double dx = c * d.x - s * d.y;
    const double dy = s * d.x + c * d.y;
    const std::array<double, 3> o = {ox, oy, oz};
    const std::array<double, 3> dir = {dx, dy, d.z};
    const std::array<double, 3> lo = {-b.half_l, -b.half_w, 0.0};
    const std::array<double, 3> hi = {b.half_l, b.half_w, b.height};
    double t0 = 0.0;
    double t1 = kInf;
    for (int a = 0; a < 3; ++a) {
      if (std::abs(dir[a]) < 1e-12) {
        if (o[a] < lo[a] || o[a] > hi[a]) return kInf;
        continue;
      }
      double ta = (lo[a] - o[a]) / dir[a];
      double tb = (hi[a] - o[a]) / dir[a];
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
      if (t0 > t1) return kInf;
    }
    return t0 > 0.0 ? t0 : kInf;
  }

  static double intersect(const Cylinder& cy, const Vec3& d) {
    double best = kInf;
    const double a = d.x * d.x + d.y * d.y;
    if (a > 1e-12) {
      const double b = -2.0 * (d.x * cy.cx + d.y * cy.cy);
      const double c = cy.cx * cy.cx + cy.cy * cy.cy - cy.radius * cy.radius;
      const double disc = b * b - 4.0 * a * c;
      if (disc >= 0.0) {
        const double t = (-b - std::sqrt(disc)) / (2.0 * a);
        const double z = t * d.z;
        if (t > 0.0 && z >= cy.z0 && z <= cy.z1) best = t;
      }
    }
    if (d.z > 1e-12 || d.z < -1e-12) {
      const double t = cy.z1 / d.z;
      if (t > 0.0 && t < best &&
          std::hypot(t * d.x - cy.cx, t * d.y - cy.cy) <= cy.radius) {
        best = t;
      }
    }
    return best;
  }

  static double intersect(const Sphere& s, const Vec3& d) {
    const double b = -2.0 * (d.x * s.cx + d.y * s.cy + d.z * s.cz);
    const double c = s.cx * s.cx + s.cy * s.cy + s.cz * s.cz - s.radius * s.radius;
    const double disc = b * b - 4.0 * c;
    if (disc < 0.0) return kInf;
    const double t = 0.5 * (-b - std::sqrt(disc));
    return t > 0.0 ? t : kInf;
  }

  const SynthConfig& cfg_;
  std::array<bool, kKindCount> active_{};
  double road_offset_ = 0.0;
  std::uint32_t next_instance_ = 1;
  std::vector<Box> boxes_;
  std::vector<Cylinder> cylinders_;
  std::vector<Sphere> spheres_;
  std::vector<std::array<double, 3>> footprints_;
};

}  // namespace

void SynthConfig::validate() const {
  if (points < 1) throw ConfigError("synth: points must be >= 1");
  if (classes < 2 || classes > kKindCount) {
    throw ConfigError("synth: classes must be in [2, 10]");
  }
  if (beams < 0) throw ConfigError("synth: beams must be >= 0");
  if (!(fov_up_deg > fov_down_deg)) {
    throw ConfigError("synth: fov_up_deg must exceed fov_down_deg");
  }
  if (!(fov_down_deg < 0.0)) {
    throw ConfigError("synth: the field of view must reach below the horizon");
  }
  if (!(sensor_height > 0.0) || !(max_range > 0.0) || range_noise < 0.0) {
    throw ConfigError("synth: sensor_height and max_range must be positive");
  }
}

std::vector<std::string> synth_class_names(int classes) {
  if (classes < 2 || classes > kKindCount) {
    throw ConfigError("synth: classes must be in [2, 10]");
  }
  return {kKindNames.begin(), kKindNames.begin() + classes};
}

Scene synth_scene(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng layout_rng(derive_seed(seed, "synth-layout"));
  const World world(cfg, layout_rng);
  Rng ray_rng(derive_seed(seed, "synth-rays"));

  Scene scene;
  scene.cloud.frame_id = "synth-" + std::to_string(seed);
  scene.cloud.intensity.emplace();
  scene.labels.num_classes = cfg.classes;
  const auto n = static_cast<std::size_t>(cfg.points);
  scene.cloud.points.reserve(n);
  scene.labels.labels.reserve(n);
  scene.instance_ids.reserve(n);

  const double deg = std::numbers::pi / 180.0;
  const double span = cfg.fov_up_deg - cfg.fov_down_deg;
  const std::size_t max_attempts = n * 2000 + 10000;
  std::size_t attempts = 0;
  while (scene.cloud.points.size() < n) {
    if (++attempts > max_attempts) {
      throw ConfigError("synth: too few rays hit the scene within max_range");
    }
    double elevation = 0.0;
    if (cfg.beams > 0) {
      const auto beam = static_cast<double>(ray_rng.below(static_cast<std::uint64_t>(cfg.beams)));
      elevation = cfg.fov_up_deg - (beam + 0.5) * span / cfg.beams +
                  ray_rng.uniform(-0.05, 0.05);
    } else {
      elevation = ray_rng.uniform(cfg.fov_down_deg, cfg.fov_up_deg);
    }
    const double azimuth = ray_rng.uniform(-std::numbers::pi, std::numbers::pi);
    const double ce = std::cos(elevation * deg);
    const Vec3 dir{ce * std::cos(azimuth), ce * std::sin(azimuth),
                   std::sin(elevation * deg)};
    const Hit hit = world.cast(dir);
    const double jitter = cfg.range_noise * (2.0 * ray_rng.uniform() - 1.0);
    if (hit.kind < 0 || hit.t > cfg.max_range) continue;
    const double t = std::max(hit.t + jitter, 0.05);
    scene.cloud.points.push_back({static_cast<float>(t * dir.x),
                                  static_cast<float>(t * dir.y),
                                  static_cast<float>(t * dir.z)});
    const float refl = kKindIntensity[static_cast<std::size_t>(hit.kind)] +
                       static_cast<float>(ray_rng.uniform(-0.05, 0.05));
    scene.cloud.intensity->push_back(std::clamp(refl, 0.0F, 1.0F));
    scene.labels.labels.push_back(static_cast<ClassId>(hit.kind));
    scene.instance_ids.push_back(hit.instance);
  }
  return scene;
}

}  // namespace lidarnl
