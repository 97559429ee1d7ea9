#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "ecmkit/error.hpp"

namespace ecmkit::probe {

struct NoiseModel {
  double relative_jitter = 0.0;
  std::uint64_t seed = 0;
};

inline void validate_noise(const NoiseModel& n) {
  if (!(n.relative_jitter >= 0.0 && n.relative_jitter <= 0.2)) {
    throw precondition_error("relative jitter must lie in [0, 0.2]");
  }
}

// Deterministic uniform draws in [0, 1). Every probe kind gets its own stream so
// that two probes of the same kind see the same draws (common random numbers).
class NoiseStream {
 public:
  NoiseStream(const NoiseModel& model, std::string_view kind) : jitter_(model.relative_jitter) {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (unsigned char c : kind) {
      h ^= c;
      h *= 1099511628211ull;
    }
    std::seed_seq seq{static_cast<std::uint32_t>(model.seed), static_cast<std::uint32_t>(model.seed >> 32),
                      static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    rng_.seed(seq);
  }

  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1p-53; }

  // Timing noise only ever slows a run down.
  double slowdown(double v) { return v * (1.0 + jitter_ * uniform()); }

  double symmetric(double v) { return v * (1.0 + jitter_ * (2.0 * uniform() - 1.0)); }

 private:
  double jitter_;
  std::mt19937_64 rng_;
};

}  // namespace ecmkit::probe
