#pragma once

#include <cmath>
#include <cstdint>

namespace proma::rng {

// splitmix64 finalizer; also used to derive child seeds.
inline std::uint64_t mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Derives an independent child seed from (seed, tag). Distinct tags give
// decorrelated streams; the same pair always gives the same child.
inline std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) {
  return mix(seed + 0x9E3779B97F4A7C15ull * (tag + 0x632BE59BD9B4E019ull));
}

// Deterministic pseudorandom stream (splitmix64 core, Box-Muller gaussians).
// All randomness in the project flows through this class so that runs are
// bitwise reproducible on one platform.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : seed_(seed), state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    return mix(state_);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u = 1.0 - uniform();  // (0, 1]
    const double v = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u));
    const double angle = 6.283185307179586476925286766559 * v;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  // Child stream independent of how much this stream has been consumed.
  Stream split(std::uint64_t tag) const { return Stream(derive(seed_, tag)); }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace proma::rng
