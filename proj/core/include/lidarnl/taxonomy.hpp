#ifndef LIDARNL_TAXONOMY_HPP_
#define LIDARNL_TAXONOMY_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lidarnl/types.hpp"

namespace lidarnl {

// The ten common classes shared by the three driving datasets, in unified id
// order.
inline constexpr std::array<std::string_view, 10> kUnifiedClassNames = {
    "car",        "bicycle",          "motorcycle", "truck",   "other-vehicle",
    "pedestrian", "drivable-surface", "sidewalk",   "terrain", "vegetation"};

inline constexpr std::array<std::string_view, 6> kThingClassNames = {
    "car", "bicycle", "motorcycle", "truck", "other-vehicle", "pedestrian"};

bool is_thing_class(std::string_view name);

// Raw dataset id -> unified id (or kIgnore), plus which unified classes the
// dataset can contain at all.
class Taxonomy {
 public:
  Taxonomy() = default;
  Taxonomy(std::vector<std::string> names,
           std::map<std::uint16_t, ClassId> mapping);
  Taxonomy(std::vector<std::string> names,
           std::map<std::uint16_t, ClassId> mapping,
           std::vector<bool> present_mask);

  // Identity over ids 0..names.size()-1 with every class present.
  static Taxonomy identity(std::vector<std::string> names);

  // Parses the `raw_id <tab> unified_name|ignore` table. Blank lines and
  // text after '#' are skipped. Classes never targeted by an entry are
  // marked absent.
  static Taxonomy parse(std::string_view text, std::vector<std::string> names);
  static Taxonomy load(const std::filesystem::path& path,
                       std::vector<std::string> names);

  int num_classes() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }
  const std::map<std::uint16_t, ClassId>& mapping() const { return mapping_; }
  const std::vector<bool>& present_mask() const { return present_; }

  bool contains(std::uint16_t raw) const { return mapping_.contains(raw); }
  // Throws UnknownClass outside the domain.
  ClassId map(std::uint16_t raw) const;
  // Throws ConfigError for a name outside the class list.
  ClassId id_of(std::string_view name) const;

 private:
  void check() const;

  std::vector<std::string> names_;
  std::map<std::uint16_t, ClassId> mapping_;
  std::vector<bool> present_;
};

std::vector<std::string> unified_class_names();

LabelArray map_taxonomy(std::span<const std::uint16_t> raw, const Taxonomy& tax);

}  // namespace lidarnl

#endif  // LIDARNL_TAXONOMY_HPP_
