#pragma once

#include <cstdint>

namespace gwps {

/// SplitMix64 generator. Chosen over std engines because the whole stream,
/// including the [0,1) mapping, is specified here bit-for-bit, so results
/// reproduce across platforms and standard-library versions.
///
/// Parallel runs derive one child stream per work chunk via
/// `Rng::for_chunk(seed, chunk)`; the derivation below is part of the
/// output format contract (reports must be byte-identical at any worker
/// count, so chunk c always sees the same stream regardless of scheduling).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0,1), 53 mantissa bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Child stream for work chunk `chunk`:
  ///   state = mix(seed) ^ mix(0x9E3779B97F4A7C15 * (chunk + 1)).
  static Rng for_chunk(std::uint64_t seed, std::uint64_t chunk) {
    Rng a(seed);
    Rng b(0x9E3779B97F4A7C15ull * (chunk + 1));
    return Rng(a.next_u64() ^ b.next_u64());
  }

 private:
  std::uint64_t state_;
};

}  // namespace gwps
