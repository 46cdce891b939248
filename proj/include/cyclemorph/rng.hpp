#pragma once

#include <cstdint>
#include <random>

namespace cm {

// Deterministic random stream. mt19937_64 output is pinned by the standard;
// uniform/gaussian transforms are hand-rolled so draws do not depend on any
// library's distribution implementation.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; caches the second draw.
  double gaussian();

  // Index in [0, n).
  std::int64_t index(std::int64_t n) {
    auto i = static_cast<std::int64_t>(uniform() * static_cast<double>(n));
    return i >= n ? n - 1 : i;
  }

  // In-place Fisher-Yates; fixed algorithm keeps shuffles reproducible.
  template <typename Vec>
  void shuffle(Vec& v) {
    for (std::int64_t i = static_cast<std::int64_t>(v.size()) - 1; i > 0; --i) {
      auto j = index(i + 1);
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace cm
