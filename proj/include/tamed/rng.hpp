#pragma once

// Splittable random streams.
//
// Every random quantity in a simulation is drawn from an Engine whose seed is
// a hash of a key tuple (master seed, experiment tag, path index, purpose,
// ...). Results therefore depend only on the key, never on thread count or
// scheduling order.

#include <bit>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <string_view>

namespace tamed {

inline constexpr std::uint64_t kDefaultSeed = 0xC0FFEE;

/// SplitMix64 finalizer (Steele, Lea, Flood 2014).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// FNV-1a; used to turn experiment tags into key words.
constexpr std::uint64_t hash_tag(std::string_view tag) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

constexpr std::uint64_t combine(std::uint64_t seed, std::uint64_t word) noexcept {
  return mix64(seed ^ mix64(word + 0x632BE59BD9B4E019ULL));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> words) noexcept {
  std::uint64_t s = mix64(seed);
  for (auto w : words) s = combine(s, w);
  return s;
}

inline std::uint64_t time_key(double t) noexcept { return std::bit_cast<std::uint64_t>(t); }

/// xoshiro256++ (Blackman & Vigna). Cheap to seed, so one engine per
/// (path, grid point) is affordable. Satisfies UniformRandomBitGenerator.
class Engine {
 public:
  using result_type = std::uint64_t;

  explicit Engine(std::uint64_t seed = kDefaultSeed) noexcept { reseed(seed); }

  void reseed(std::uint64_t seed) noexcept {
    std::uint64_t z = seed;
    for (auto& w : s_) {
      z += 0x9E3779B97F4A7C15ULL;
      std::uint64_t x = z;
      x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
      x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
      w = x ^ (x >> 31);
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = std::rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = std::rotl(s_[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  friend bool operator==(const Engine&, const Engine&) = default;

 private:
  std::uint64_t s_[4]{};
};

inline Engine make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> words) noexcept {
  return Engine(derive_seed(seed, words));
}

}  // namespace tamed
