#pragma once

#include <cstdint>
#include <cmath>
#include <random>

namespace pat {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) {
    return splitmix64(seed ^ (v + 0x9e3779b97f4a7c15ull));
}

// mt19937_64 with explicit uniform/normal mappings so streams are identical
// across standard libraries for a given seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::size_t uniform_index(std::size_t n) { return std::size_t(engine_() % n); }

    // Polar Box-Muller; one value per call, the twin is discarded for a
    // state that does not depend on call parity.
    double normal() {
        for (;;) {
            const double u = 2.0 * uniform() - 1.0;
            const double v = 2.0 * uniform() - 1.0;
            const double s = u * u + v * v;
            if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
        }
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Resampled truncation at +-2 sigma.
    double trunc_normal(double stddev) {
        for (;;) {
            const double x = normal() * stddev;
            if (std::abs(x) <= 2.0 * stddev) return x;
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace pat
