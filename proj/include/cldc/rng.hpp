#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "cldc/errors.hpp"

namespace cldc::rng {

// Deterministic cross-platform PRNG. We avoid std::uniform_*_distribution on
// purpose: their output sequences are implementation-defined, and run logs
// must be reproducible byte-for-byte from (seed, config) alone.

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// Combine a seed with a label into a fresh stream seed. Used for the named
/// substreams (env, policy init, sampling, exploration, reservoir, eval) so
/// that consuming one stream never perturbs another.
inline std::uint64_t derive(std::uint64_t seed, std::string_view label) {
    std::uint64_t s = seed ^ fnv1a(label);
    // one tempering round so derive(0, "") != 0 and labels diffuse fully
    return splitmix64(s);
}

inline std::uint64_t derive(std::uint64_t seed, std::string_view label, std::uint64_t index) {
    std::uint64_t s = derive(seed, label) ^ (0x9E3779B97F4A7C15ULL * (index + 1));
    return splitmix64(s);
}

class Stream {
public:
    Stream() : state_(0x853C49E6748FEA9BULL) {}
    explicit Stream(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return splitmix64(state_); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
    std::uint64_t uniform_index(std::uint64_t n) {
        if (n == 0) throw NumericFault("uniform_index: empty range");
        std::uint64_t mask = ~0ULL;
        if (n <= (1ULL << 63)) {
            mask = (std::uint64_t(1) << bit_width(n)) - 1;
        }
        for (;;) {
            std::uint64_t v = next_u64() & mask;
            if (v < n) return v;
        }
    }

    /// Sample an index from an unnormalized nonnegative weight vector.
    std::size_t categorical(std::span<const double> weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        if (!(total > 0.0)) throw NumericFault("categorical: nonpositive weight total");
        double u = uniform01() * total;
        double acc = 0.0;
        std::size_t last = weights.size();
        for (std::size_t i = 0; i < weights.size(); ++i) {
            if (weights[i] <= 0.0) continue;
            acc += weights[i];
            last = i;
            if (u < acc) return i;
        }
        // numerical slack at the top of the CDF: return the last positive entry
        if (last == weights.size()) throw NumericFault("categorical: no positive weight");
        return last;
    }

    /// Child stream with an independent label-derived seed.
    Stream child(std::string_view label) const { return Stream(derive(state_, label)); }
    Stream child(std::string_view label, std::uint64_t index) const {
        return Stream(derive(state_, label, index));
    }

private:
    static int bit_width(std::uint64_t n) {
        int w = 0;
        std::uint64_t v = n - 1;
        while (v) {
            ++w;
            v >>= 1;
        }
        return w == 0 ? 1 : w;
    }

    std::uint64_t state_;
};

/// Fisher-Yates shuffle of index vector, driven by the stream.
inline void shuffle(std::vector<std::size_t>& idx, Stream& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        std::size_t j = rng.uniform_index(i);
        std::swap(idx[i - 1], idx[j]);
    }
}

}  // namespace cldc::rng
