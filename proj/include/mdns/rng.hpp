#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string_view>

namespace mdns {

/// Splittable generator used for every random draw in the library.
///
/// Each stream is identified by a 64-bit key derived from (seed, purpose tag,
/// indices) through SplitMix64 mixing, so trajectory i of step k always sees
/// the same numbers regardless of how the batch is chunked. The engine itself
/// is xoshiro256**; it satisfies UniformRandomBitGenerator so standard
/// distributions can be used on top of it.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t key);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

 private:
  std::array<std::uint64_t, 4> s_;
};

std::uint64_t splitmix64(std::uint64_t x);

/// FNV-1a of a purpose tag, so call sites can name their streams.
constexpr std::uint64_t tag_hash(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Derives a child stream key from a parent key and an index.
std::uint64_t derive_key(std::uint64_t parent, std::uint64_t index);

/// Stream key for (seed, tag).
std::uint64_t stream_key(std::uint64_t seed, std::string_view tag);

inline Rng stream(std::uint64_t seed, std::string_view tag, std::uint64_t index) {
  return Rng(derive_key(stream_key(seed, tag), index));
}

}  // namespace mdns
