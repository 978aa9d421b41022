#pragma once

#include <cstdint>
#include <random>

namespace guidedec {

/// Seeded generator for one generation session. Uses mt19937_64, whose
/// output sequence is fixed by the standard, and converts draws to doubles
/// by hand so results do not depend on the standard library's
/// distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace guidedec
