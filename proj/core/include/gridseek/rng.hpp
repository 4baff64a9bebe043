#pragma once

#include <cstdint>
#include <initializer_list>

namespace gridseek {

// splitmix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_key(std::initializer_list<std::uint64_t> parts) noexcept {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (auto p : parts) h = mix64(h ^ mix64(p));
  return h;
}

// Counter-based generator: the n-th draw is a pure function of (key, n), so a
// stream can be reconstructed from its key alone.
class CounterRng {
 public:
  constexpr explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}
  constexpr CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
      : key_(hash_key({seed, stream})) {}

  constexpr std::uint64_t next_u64() noexcept { return mix64(key_ ^ mix64(counter_++)); }

  // Uniform in [0, 1) with 53 bits of resolution.
  constexpr double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }
  constexpr double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  constexpr bool bernoulli(double p) noexcept { return uniform() < p; }

  // Uniform integer in [lo, hi] (inclusive).
  constexpr std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(static_cast<std::uint64_t>(uniform() * static_cast<double>(span)) % span);
  }

  constexpr std::uint64_t key() const noexcept { return key_; }
  constexpr std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace gridseek
