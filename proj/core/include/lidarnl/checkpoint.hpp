#ifndef LIDARNL_CHECKPOINT_HPP_
#define LIDARNL_CHECKPOINT_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lidarnl/network.hpp"

namespace lidarnl {

// Binary checkpoint container; byte layout in docs/checkpoint_format.md.
inline constexpr char kCheckpointMagic[8] = {'L', 'N', 'L', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  ad::Tensor value;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct Checkpoint {
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::string config_text;  // resolved experiment config, canonical form
  std::vector<NamedTensor> tensors;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::vector<std::byte> serialize_checkpoint(const Checkpoint& ck);
// Throws LengthError on truncation and ValueError on a bad magic/version.
Checkpoint parse_checkpoint(std::span<const std::byte> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint make_checkpoint(const Model& model, std::uint64_t seed, std::uint64_t config_hash,
                           std::string config_text);
// Builds a model for cfg and fills it from the checkpoint. Every parameter
// must be present with a matching shape (ShapeError otherwise).
Model model_from_checkpoint(const Checkpoint& ck, const NetworkConfig& cfg);

}  // namespace lidarnl

#endif  // LIDARNL_CHECKPOINT_HPP_
