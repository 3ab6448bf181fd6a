#ifndef LIDARNL_SCAN_IO_HPP_
#define LIDARNL_SCAN_IO_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lidarnl/types.hpp"

namespace lidarnl {

// Scan files: contiguous little-endian float32 quadruplets
// (x, y, z, intensity), 16 bytes per point.
//
// Label files: contiguous little-endian uint32 words; the low 16 bits are the
// semantic id and the high 16 bits the instance id.

inline constexpr std::size_t kScanRecordBytes = 16;
inline constexpr std::size_t kLabelRecordBytes = 4;

PointCloud parse_scan(std::span<const std::byte> bytes);

// Clouds without intensity are written with intensity 0.
std::vector<std::byte> serialize_scan(const PointCloud& cloud);

// Undecoded label file contents. Semantic ids are raw dataset ids until
// passed through a Taxonomy.
struct RawLabels {
  std::vector<std::uint16_t> semantic;
  std::vector<std::uint32_t> instance_ids;

  std::size_t size() const { return semantic.size(); }
};

RawLabels parse_labels(std::span<const std::byte> bytes);

// Throws ValueError when an instance id does not fit in 16 bits.
std::vector<std::byte> serialize_labels(std::span<const std::uint16_t> semantic,
                                        std::span<const std::uint32_t> instance_ids);

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path,
                      std::span<const std::byte> bytes);

}  // namespace lidarnl

#endif  // LIDARNL_SCAN_IO_HPP_
