#pragma once

// Deterministic random number generation for reproducible Monte Carlo.
//
// Replication streams are derived from a master seed by hashing counters
// (splitmix64 finalizer), so any (grid point, replication) pair owns an
// independent stream regardless of execution order or thread count.
// Uniform/normal/exponential variates are generated from explicit bit
// manipulation and closed-form transforms rather than std:: distributions,
// whose output is implementation-defined.

#include <array>
#include <cstdint>
#include <cmath>

namespace nlr {

namespace detail {

inline constexpr std::uint64_t kSplitMixGamma = 0x9e3779b97f4a7c15ULL;

inline constexpr std::uint64_t splitmix64_finalize(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace detail

/// Advances a splitmix64 state and returns the next output word.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    state += detail::kSplitMixGamma;
    return detail::splitmix64_finalize(state);
}

/// Hashes (master_seed, a, b) into a stream key. Used to assign one
/// independent stream per (grid index, replication index).
inline std::uint64_t derive_stream_key(std::uint64_t master_seed,
                                       std::uint64_t a,
                                       std::uint64_t b) {
    std::uint64_t s = master_seed;
    std::uint64_t k = splitmix64_next(s);
    s ^= detail::splitmix64_finalize(a + 0x8e9d1c9f2b6e5a37ULL);
    k ^= splitmix64_next(s);
    s ^= detail::splitmix64_finalize(b + 0xc3a5c85c97cb3127ULL);
    k ^= splitmix64_next(s);
    return k;
}

/// xoshiro256++ stream seeded from a single 64-bit key via splitmix64.
class RngStream {
public:
    using result_type = std::uint64_t;

    explicit RngStream(std::uint64_t key) {
        // The all-zero state is unreachable: splitmix64 of distinct
        // counters cannot produce four zero words.
        for (auto& word : state_) word = splitmix64_next(key);
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }

    result_type operator()() { return next_u64(); }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1), 53 random bits.
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in (0, 1]; safe as a log() argument.
    double next_uniform_pos() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller. Consumes exactly two uniforms.
    double next_normal() {
        const double u1 = next_uniform_pos();
        const double u2 = next_uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(6.283185307179586476925286766559 * u2);
    }

    /// Standard exponential (mean 1).
    double next_exponential() {
        return -std::log(next_uniform_pos());
    }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::array<std::uint64_t, 4> state_;
};

} // namespace nlr
