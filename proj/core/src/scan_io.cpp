#include "lidarnl/scan_io.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <string>

#include "lidarnl/errors.hpp"

namespace lidarnl {
namespace {

std::uint32_t load_u32_le(const std::byte* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

void store_u32_le(std::uint32_t v, std::byte* p) {
  p[0] = static_cast<std::byte>(v & 0xFFU);
  p[1] = static_cast<std::byte>((v >> 8) & 0xFFU);
  p[2] = static_cast<std::byte>((v >> 16) & 0xFFU);
  p[3] = static_cast<std::byte>((v >> 24) & 0xFFU);
}

float load_f32_le(const std::byte* p) {
  return std::bit_cast<float>(load_u32_le(p));
}

void store_f32_le(float v, std::byte* p) {
  store_u32_le(std::bit_cast<std::uint32_t>(v), p);
}

}  // namespace

PointCloud parse_scan(std::span<const std::byte> bytes) {
  if (bytes.size() % kScanRecordBytes != 0) {
    throw LengthError("scan buffer of " + std::to_string(bytes.size()) +
                      " bytes is not a multiple of 16");
  }
  const std::size_t n = bytes.size() / kScanRecordBytes;
  PointCloud cloud;
  cloud.points.resize(n);
  cloud.intensity.emplace(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::byte* rec = bytes.data() + k * kScanRecordBytes;
    Point3f& p = cloud.points[k];
    p.x = load_f32_le(rec);
    p.y = load_f32_le(rec + 4);
    p.z = load_f32_le(rec + 8);
    (*cloud.intensity)[k] = load_f32_le(rec + 12);
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      throw ValueError("scan point " + std::to_string(k) +
                       " has a non-finite coordinate");
    }
  }
  return cloud;
}

std::vector<std::byte> serialize_scan(const PointCloud& cloud) {
  cloud.validate();
  std::vector<std::byte> out(cloud.size() * kScanRecordBytes);
  for (std::size_t k = 0; k < cloud.size(); ++k) {
    std::byte* rec = out.data() + k * kScanRecordBytes;
    const Point3f& p = cloud.points[k];
    store_f32_le(p.x, rec);
    store_f32_le(p.y, rec + 4);
    store_f32_le(p.z, rec + 8);
    store_f32_le(cloud.intensity ? (*cloud.intensity)[k] : 0.0F, rec + 12);
  }
  return out;
}

RawLabels parse_labels(std::span<const std::byte> bytes) {
  if (bytes.size() % kLabelRecordBytes != 0) {
    throw LengthError("label buffer of " + std::to_string(bytes.size()) +
                      " bytes is not a multiple of 4");
  }
  const std::size_t n = bytes.size() / kLabelRecordBytes;
  RawLabels out;
  out.semantic.resize(n);
  out.instance_ids.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::uint32_t w = load_u32_le(bytes.data() + k * kLabelRecordBytes);
    out.semantic[k] = static_cast<std::uint16_t>(w & 0xFFFFU);
    out.instance_ids[k] = w >> 16;
  }
  return out;
}

std::vector<std::byte> serialize_labels(
    std::span<const std::uint16_t> semantic,
    std::span<const std::uint32_t> instance_ids) {
  if (semantic.size() != instance_ids.size()) {
    throw LengthError("semantic and instance sequences differ in length");
  }
  std::vector<std::byte> out(semantic.size() * kLabelRecordBytes);
  for (std::size_t k = 0; k < semantic.size(); ++k) {
    if (instance_ids[k] > 0xFFFFU) {
      throw ValueError("instance id " + std::to_string(instance_ids[k]) +
                       " does not fit in 16 bits");
    }
    const std::uint32_t w =
        static_cast<std::uint32_t>(semantic[k]) | (instance_ids[k] << 16);
    store_u32_le(w, out.data() + k * kLabelRecordBytes);
  }
  return out;
}

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + path.string());
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::byte> bytes(size);
  if (size > 0 &&
      !in.read(reinterpret_cast<char*>(bytes.data()),
               static_cast<std::streamsize>(size))) {
    throw IoError("short read on " + path.string());
  }
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path,
                      std::span<const std::byte> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed on " + path.string());
}

}  // namespace lidarnl
