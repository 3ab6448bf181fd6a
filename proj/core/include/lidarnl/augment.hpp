#ifndef LIDARNL_AUGMENT_HPP_
#define LIDARNL_AUGMENT_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "lidarnl/types.hpp"

namespace lidarnl {

// Azimuth atan2(y, x) lies in the wrapped sector [alpha0, alpha0 + sigma).
bool in_sector(double azimuth, double alpha0, double sigma);

// Points of p inside the sector are replaced by the points of q from the
// same sector. Output order: surviving p points (original order), then the
// q points (original order).
Scene scene_swap(const Scene& p, const Scene& q, double alpha0, double sigma);

// Every point of q whose label is in thing_classes is copied once per angle,
// rotated about the z axis, and appended to p. Each (source instance, angle)
// pair gets a fresh instance id above p's largest.
Scene rotate_paste(const Scene& p, const Scene& q, std::span<const ClassId> thing_classes,
                   std::span<const double> angles);

Scene rotate_z(const Scene& p, double angle);

struct PolarMixConfig {
  bool swap = true;
  bool paste = true;
  double sigma = 3.141592653589793;  // radians of azimuth swapped
  int paste_angles = 2;
  std::vector<ClassId> thing_classes;
  bool weak_rotate = true;  // weak view: random global z rotation

  void validate() const;
};

// strong: mixed scan (N' points), weak: structure-preserving copy of p (N
// points). strong_origin[i] is the index in p that strong point i came
// from, or -1 for points contributed by q.
struct ViewPair {
  Scene strong;
  Scene weak;
  std::vector<std::int64_t> strong_origin;
};

ViewPair polarmix(const Scene& p, const Scene& q, const PolarMixConfig& cfg,
                  std::uint64_t seed);

struct RangeGridConfig {
  int rows = 16;
  int cols = 512;
  double fov_up_deg = 3.0;
  double fov_down_deg = -25.0;

  void validate() const;
  static RangeGridConfig kitti() { return {64, 2048, 3.0, -25.0}; }
};

// Per-point range-image cell. Row 0 is the top of the field of view; points
// outside the vertical field of view clamp to the boundary rows.
struct RangeGrid {
  int rows = 0;
  int cols = 0;
  std::vector<int> row;
  std::vector<int> col;

  std::vector<std::size_t> row_histogram() const;
};

RangeGrid range_project(const Scene& p, const RangeGridConfig& cfg);

struct RowDropResult {
  Scene scene;
  std::vector<std::size_t> index_map;  // strictly increasing indices into p
  std::vector<int> dropped_rows;       // sorted
};

RowDropResult row_drop(const Scene& p, const RangeGrid& grid, int drop_count,
                       std::uint64_t seed);

// Four derived views. p_sa / p_wa are the unmodified strong / weak views;
// p_ss / p_ws are their row-dropped versions with index maps back.
struct DualViews {
  Scene p_ss;
  Scene p_sa;
  Scene p_ws;
  Scene p_wa;
  std::vector<std::size_t> idx_ss_in_sa;
  std::vector<std::size_t> idx_ws_in_wa;
  // p_sa point -> p_wa row holding the same source point, or -1.
  std::vector<std::int64_t> sa_origin;
};

DualViews build_views(const ViewPair& vp, const RangeGridConfig& grid, int drop_count,
                      std::uint64_t seed);

// Inverse of an order-preserving index map: for each parent row the child
// row, or -1 when the parent point was dropped.
std::vector<std::int64_t> invert_index_map(std::span<const std::size_t> map,
                                           std::size_t parent_size);

}  // namespace lidarnl

#endif  // LIDARNL_AUGMENT_HPP_
