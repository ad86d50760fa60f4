#pragma once

#include <cmath>
#include <cstdint>

namespace l2c {

// Counter-based generator: value i of stream `seed` is a SplitMix64-style hash
// of seed and counter. Gaussian/Gumbel draws go through explicit formulas
// (Box-Muller, inverse-Gumbel) instead of std::<distribution> so that streams
// are reproducible across standard libraries.
struct Rng {
    uint64_t seed = 0;
    uint64_t counter = 0;
    bool have_spare = false;
    double spare = 0.0;

    explicit Rng(uint64_t s = 0) : seed(s) {}

    uint64_t next_u64() {
        uint64_t z = seed + 0x9E3779B97F4A7C15ULL * ++counter;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in (0, 1); offset keeps log() away from 0.
    double uniform_pos() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53 + 0x1.0p-54; }

    // Uniform integer in [0, n).
    uint64_t below(uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller; the paired draw is cached.
    double gaussian() {
        if (have_spare) {
            have_spare = false;
            return spare;
        }
        double u1 = uniform_pos();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double th = 6.283185307179586476925286766559 * u2;
        spare = r * std::sin(th);
        have_spare = true;
        return r * std::cos(th);
    }

    // Standard Gumbel: -ln(-ln U).
    double gumbel() { return -std::log(-std::log(uniform_pos())); }
};

}  // namespace l2c
