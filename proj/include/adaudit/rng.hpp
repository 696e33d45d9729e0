#pragma once

#include <cstdint>
#include <random>

namespace adaudit {

// SplitMix64 finalizer. Used to derive independent stream seeds from a root.
inline constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Pure function of (root, id); distinct ids give unrelated seeds.
inline constexpr std::uint64_t derive_seed(std::uint64_t root,
                                           std::uint64_t id) noexcept {
  return mix64(mix64(root) ^ mix64(id + 0x632be59bd9b4e019ULL));
}

// A single random stream. Uniforms are built from the top 53 bits of the
// engine output so results do not depend on the standard library's
// distribution implementation.
class Stream {
 public:
  explicit Stream(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform01() < p; }

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace adaudit
