#ifndef LIDARNL_RNG_HPP_
#define LIDARNL_RNG_HPP_

#include <cstdint>
#include <string_view>

namespace lidarnl {

// Every random draw in the library goes through the SplitMix64 mixer below.
// It is pure integer arithmetic, so results are identical on every platform
// and compiler. Bump kRngVersion if the mixing or the derivation of doubles
// ever changes; audits and manifests record it.
inline constexpr std::string_view kRngName = "splitmix64";
inline constexpr int kRngVersion = 1;

std::uint64_t splitmix64(std::uint64_t x);

// Stateless draw keyed by (key, counter). Used where each element needs an
// independent draw that does not depend on how the work is partitioned.
std::uint64_t counter_bits(std::uint64_t key, std::uint64_t counter);

// Sub-seed for a named pipeline stage.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// Top 53 bits mapped to [0, 1).
double unit_double(std::uint64_t bits);

// Multiply-shift reduction of 64 random bits to [0, n).
std::uint64_t reduce_below(std::uint64_t bits, std::uint64_t n);

// Sequential stream generator (SplitMix64 state walk).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();
  double uniform();                        // [0, 1)
  double uniform(double lo, double hi);    // [lo, hi)
  std::uint64_t below(std::uint64_t n);    // [0, n), n > 0
  double normal();                         // standard normal, Box-Muller

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a 64-bit, used for config hashes and manifest digests.
std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t fnv1a64(const void* data, std::size_t size);

}  // namespace lidarnl

#endif  // LIDARNL_RNG_HPP_
