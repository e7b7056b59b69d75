#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "core/geometry.hpp"

namespace propsplat {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seeded generator with portable draw helpers. Only raw mt19937_64 output is
// consumed (no std::*_distribution, whose results vary across standard
// libraries), so identical seeds give identical streams on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), eng_(splitmix64(seed)) {}

    std::uint64_t raw() { return eng_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Unbiased integer in [0, n).
    std::size_t index(std::size_t n) {
        const std::uint64_t bound = n;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t r;
        do {
            r = eng_();
        } while (r >= limit);
        return static_cast<std::size_t>(r % bound);
    }

    // Standard normal via Box-Muller.
    double normal() {
        double u1 = uniform01();
        if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    // Independent child stream, stable under reordering of other draws.
    Rng stream(std::uint64_t id) const {
        return Rng(splitmix64(seed_ ^ (0xd1b54a32d192ed03ULL * (id + 1))));
    }

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 eng_;
};

} // namespace propsplat
