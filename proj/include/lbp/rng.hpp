#pragma once

#include <cstdint>
#include <string_view>

namespace lbp {

// Counter-based uniform streams. Every draw is a pure function of
// (master seed, individual, node, time), so results do not depend on the
// order in which individuals are simulated or on how they are partitioned
// across threads.

constexpr std::uint64_t mix64(std::uint64_t x) {
  // SplitMix64 finalizer.
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derives a child seed; used to give each estimand, arm or replicate its own
// namespace of streams.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  return mix64(mix64(seed ^ 0x6a09e667f3bcc909ULL) + mix64(salt + 0x9e3779b97f4a7c15ULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view salt) {
  return derive_seed(seed, fnv1a64(salt));
}

struct StreamId {
  std::uint64_t individual = 0;
  std::uint64_t node = 0;  // fnv1a64 of the node name
  std::uint32_t time = 0;
};

class NoiseSource {
 public:
  constexpr explicit NoiseSource(std::uint64_t master_seed) : seed_(master_seed) {}

  constexpr std::uint64_t seed() const { return seed_; }

  constexpr std::uint64_t bits(const StreamId& id) const {
    std::uint64_t x = mix64(seed_ + 0x9e3779b97f4a7c15ULL * (id.individual + 1));
    x = mix64(x ^ id.node);
    x = mix64(x + 0xd1b54a32d192ed03ULL * (static_cast<std::uint64_t>(id.time) + 1));
    return x;
  }

  // Uniform on [0, 1) with 53 bits of resolution.
  constexpr double uniform(const StreamId& id) const {
    return static_cast<double>(bits(id) >> 11) * 0x1.0p-53;
  }

  constexpr double uniform(std::uint64_t individual, std::uint64_t node, std::uint32_t time) const {
    return uniform(StreamId{individual, node, time});
  }

 private:
  std::uint64_t seed_;
};

}  // namespace lbp
