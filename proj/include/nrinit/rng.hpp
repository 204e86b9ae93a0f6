#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace nrinit {

/// Seeded generator with distribution code fixed here rather than in the
/// standard library, so sequences are identical across toolchains.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform on (lo, hi]; used for the half-open intervals of the RL state.
    double uniform_left_open(double lo, double hi) { return hi - (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (one value per call, no caching).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    /// Uniform integer in [0, n).
    std::uint64_t index(std::uint64_t n) { return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)); }

    std::uint64_t next_u64() { return engine_(); }

    /// Independent child stream derived from this one.
    Rng split() { return Rng(engine_() ^ 0x9E3779B97F4A7C15ull); }

  private:
    std::mt19937_64 engine_;
};

}  // namespace nrinit
