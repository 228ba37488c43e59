#pragma once

#include <cstdint>
#include <limits>

namespace divbar {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t mix_key(std::uint64_t a, std::uint64_t b) noexcept {
  return splitmix64(a ^ splitmix64(b + 0x632be59bd9b4e019ULL));
}

/// Stream domains keep channel, arrival and policy randomness disjoint so that
/// a policy change never perturbs channel draws.
enum class StreamDomain : std::uint64_t {
  kChannel = 1,
  kArrival = 2,
  kPolicy = 3,
  kOracle = 4,
};

/// Counter-based random stream. Each (seed, domain, a, b) names an independent
/// stream; draws are addressed by counter so replicas and policies that consume
/// different numbers of values stay aligned slot by slot.
///
/// Also models UniformRandomBitGenerator for sequential use.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  RandomStream() = default;
  RandomStream(std::uint64_t seed, StreamDomain domain, std::uint64_t a = 0,
               std::uint64_t b = 0) noexcept
      : key_(mix_key(mix_key(mix_key(seed, static_cast<std::uint64_t>(domain)), a), b)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept { return bits_at(counter_++); }

  /// Uniform in the open interval (0, 1).
  double uniform() noexcept { return to_unit(operator()()); }

  result_type bits_at(std::uint64_t counter, std::uint64_t sub = 0) const noexcept {
    return splitmix64(key_ ^ splitmix64(counter * 0x9e3779b97f4a7c15ULL + sub));
  }

  double uniform_at(std::uint64_t counter, std::uint64_t sub = 0) const noexcept {
    return to_unit(bits_at(counter, sub));
  }

  std::uint64_t key() const noexcept { return key_; }

 private:
  static double to_unit(result_type bits) noexcept {
    // 53 random mantissa bits, shifted off zero.
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace divbar
