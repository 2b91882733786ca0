#pragma once

#include <cstdint>
#include <cmath>
#include <initializer_list>

namespace tgnn {

/// Deterministic counter-based random stream. Streams are derived by
/// hashing a key tuple (seed, epoch, node, ...) with splitmix64, then
/// iterated with xoshiro256++. Identical keys give identical streams on
/// every platform; std::<random> distributions are deliberately avoided
/// because their output is implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) { seed_state(seed); }

    Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> key) {
        std::uint64_t h = seed;
        for (std::uint64_t k : key) h = mix(h ^ mix(k));
        seed_state(h);
    }

    /// Derive an independent substream keyed by additional ids.
    [[nodiscard]] Rng fork(std::initializer_list<std::uint64_t> key) const {
        std::uint64_t h = origin_;
        for (std::uint64_t k : key) h = mix(h ^ mix(k));
        return Rng(h);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_index(std::uint64_t n) {
        // rejection sampling, no modulo bias
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    /// Standard normal via Box-Muller.
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

    bool bernoulli(double p) { return uniform() < p; }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    static constexpr std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    void seed_state(std::uint64_t seed) {
        origin_ = seed;
        std::uint64_t z = seed;
        for (auto& s : s_) {
            z += 0x9e3779b97f4a7c15ULL;
            s = mix(z);
        }
        // xoshiro requires a nonzero state
        if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
    }

    std::uint64_t s_[4] = {};
    std::uint64_t origin_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace tgnn
