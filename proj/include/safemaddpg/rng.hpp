#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace safemaddpg {

/// Deterministic random source. All sampling goes through explicit
/// distribution code on top of mt19937_64 so that a given seed produces
/// the same stream on every standard library implementation.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform double in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; pairs are generated lazily.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 6.283185307179586476925286766559 * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return radius * std::cos(angle);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Unbiased uniform integer in [0, n), n >= 1. Rejection sampling.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t bound = n == 0 ? 0 : (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
        std::uint64_t raw = engine_();
        while (raw >= bound) raw = engine_();
        return raw % n;
    }

    std::uint64_t raw() { return engine_(); }

    /// Derive an independent child seed for a named sub-stream.
    std::uint64_t fork_seed(std::uint64_t stream) {
        return mix(engine_() ^ mix(stream));
    }

    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace safemaddpg
