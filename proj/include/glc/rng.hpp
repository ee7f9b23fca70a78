#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace glc {

namespace detail {

// splitmix64 step (Steele, Lea, Flood). Used for seeding and stream derivation.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl64(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

}  // namespace detail

// Deterministic random stream: xoshiro256** (Blackman & Vigna, 2018), seeded
// through splitmix64. Both algorithms are implemented right here and all
// distribution helpers below avoid <random>, so a given seed produces the
// exact same 64-bit stream regardless of platform or standard library.
// (next_gaussian goes through libm log/cos, whose last-ulp rounding may vary
// across C libraries; the integer and uniform streams are bit-exact anywhere.)
//
// A stream is single-owner: do not share one RngState across concurrent
// tasks, derive() independent child streams instead.
class RngState {
public:
    explicit RngState(std::uint64_t seed) : seed_(seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = detail::splitmix64_next(sm);
    }

    std::uint64_t seed() const { return seed_; }

    // Raw 64-bit draw (xoshiro256**).
    std::uint64_t next_u64() {
        const std::uint64_t result = detail::rotl64(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = detail::rotl64(state_[3], 45);
        return result;
    }

    // Uniform double in [0, 1) with 53 random bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n), unbiased via rejection.
    std::uint64_t next_below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("RngState::next_below: n must be positive");
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Standard normal via Box-Muller (cosine branch).
    double next_gaussian() {
        const double u1 = 1.0 - next_double();  // (0, 1], keeps log finite
        const double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    // Uniform double in [-bound, bound].
    double next_symmetric(double bound) { return (2.0 * next_double() - 1.0) * bound; }

    // Child stream determined only by (construction seed, salt), independent
    // of how much of this stream has been consumed. derive(a) != derive(b)
    // streams for a != b, and chains (derive(a).derive(b)) stay independent.
    RngState derive(std::uint64_t salt) const {
        std::uint64_t sm = seed_ ^ (0x9E3779B97F4A7C15ULL * (salt + 1));
        return RngState(detail::splitmix64_next(sm));
    }

private:
    static constexpr double kPi = 3.14159265358979323846;
    std::uint64_t seed_;
    std::uint64_t state_[4];
};

}  // namespace glc
