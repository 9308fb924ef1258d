#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include "mmdiag/util.hpp"

namespace mmdiag {

// Deterministic splitmix64 generator. The standard <random> distributions
// leave their algorithms implementation-defined; everything here is pinned
// so outputs are reproducible byte-for-byte from a seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    // Derives an independent stream seed from a master seed and a tag,
    // stable under reordering of the call sites.
    static Rng stream(std::uint64_t seed, std::string_view tag) {
        return Rng(seed ^ fnv1a64(tag));
    }

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Uniform in [0, n). n must be > 0; modulo bias is negligible for the
    // small ranges used here.
    std::size_t next_index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

    bool next_bernoulli(double p) { return next_double() < p; }

    // Standard normal via Box-Muller.
    double next_gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = next_double();
        double u2 = next_double();
        if (u1 < 1e-300) u1 = 1e-300;
        const double two_pi = 6.283185307179586476925286766559;
        double mag = std::sqrt(-2.0 * std::log(u1));
        spare_ = mag * std::sin(two_pi * u2);
        has_spare_ = true;
        return mag * std::cos(two_pi * u2);
    }

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace mmdiag
