#ifndef LIDARNL_SYNTH_HPP_
#define LIDARNL_SYNTH_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "lidarnl/types.hpp"

namespace lidarnl {

// Parameters of the synthetic scan generator. A virtual spinning sensor sits
// at the origin, `sensor_height` meters above a straight road, and casts
// rays on `beams` elevation rings until `points` returns have been collected.
struct SynthConfig {
  int points = 1500;
  int classes = 6;  // 2..10, see synth_class_names()
  int beams = 32;   // 0 = continuous elevation
  double fov_up_deg = 3.0;
  double fov_down_deg = -25.0;
  double sensor_height = 1.73;
  double max_range = 40.0;
  double range_noise = 0.02;  // meters, along the ray

  void validate() const;
};

// Class names emitted for a given class count. The generator knows ten
// surface/object kinds; with fewer classes the lower-priority kinds are not
// spawned and ground bands fall back to the nearest active ground class.
std::vector<std::string> synth_class_names(int classes);

// Deterministic in (cfg, seed).
Scene synth_scene(const SynthConfig& cfg, std::uint64_t seed);

}  // namespace lidarnl

#endif  // LIDARNL_SYNTH_HPP_
