#ifndef LIDARNL_TYPES_HPP_
#define LIDARNL_TYPES_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace lidarnl {

using ClassId = std::uint16_t;

// Sentinel for points excluded from every loss and metric. It is also the
// value written to label files, so it must stay representable in 16 bits.
inline constexpr ClassId kIgnore = 0xFFFF;

struct Point3f {
  float x = 0.0F;
  float y = 0.0F;
  float z = 0.0F;

  friend bool operator==(const Point3f&, const Point3f&) = default;
};

// Sensor-centric point set. Coordinates are meters; intensity, when present,
// is unitless reflectance in [0, 1] and has one entry per point.
struct PointCloud {
  std::vector<Point3f> points;
  std::optional<std::vector<float>> intensity;
  std::string frame_id;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  // Throws ValueError / LengthError when the invariants do not hold.
  void validate() const;

  friend bool operator==(const PointCloud&, const PointCloud&) = default;
};

// Per-point class ids over {0..num_classes-1} plus kIgnore.
struct LabelArray {
  std::vector<ClassId> labels;
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
  void validate() const;

  friend bool operator==(const LabelArray&, const LabelArray&) = default;
};

// A labeled scan. instance_ids uses 0 for "stuff" points.
struct Scene {
  PointCloud cloud;
  LabelArray labels;
  std::vector<std::uint32_t> instance_ids;

  std::size_t size() const { return cloud.size(); }
  void validate() const;

  // Appends point i of other (with label, intensity and instance id).
  void push_point_from(const Scene& other, std::size_t i);
  // Copy of this scene restricted to the given point indices, in order.
  Scene subset(const std::vector<std::size_t>& indices) const;
  // Empty scene with the same metadata (class count, frame id, intensity
  // presence) as this one.
  Scene empty_like() const;

  friend bool operator==(const Scene&, const Scene&) = default;
};

}  // namespace lidarnl

#endif  // LIDARNL_TYPES_HPP_
