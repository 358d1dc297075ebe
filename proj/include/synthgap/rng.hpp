#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace synthgap {

// splitmix64 step; used both as a stream-derivation hash and to expand a
// 64-bit seed into generator state.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Order-sensitive combination of seed words. Every RNG stream in the project
// is derived from explicit inputs through this function, so identical inputs
// always reproduce identical streams.
inline uint64_t hash_combine(uint64_t a, uint64_t b) {
    uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    return splitmix64(s);
}

template <typename... Rest>
inline uint64_t hash_combine(uint64_t a, uint64_t b, Rest... rest) {
    return hash_combine(hash_combine(a, b), static_cast<uint64_t>(rest)...);
}

// FNV-1a, for folding protocol/parameter labels into seed derivations.
inline uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Deterministic generator wrapper. std::mt19937_64 output is pinned by the
// standard; the std distributions are not, so uniform/normal draws are
// implemented here instead of via <random> distributions.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(expand(seed)) {}

    uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n), n >= 1; rejection-free modulo is fine here
    // because n is tiny relative to 2^64.
    uint64_t uniform_index(uint64_t n) { return gen_() % n; }

    // standard normal via Box-Muller (one value per call, no cached spare,
    // keeping the draw count predictable).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    template <typename It>
    void shuffle(It first, It last) {
        auto n = static_cast<uint64_t>(last - first);
        for (uint64_t i = n; i > 1; --i) {
            uint64_t j = uniform_index(i);
            std::swap(first[i - 1], first[j]);
        }
    }

private:
    static std::mt19937_64 expand(uint64_t seed) {
        uint64_t s = seed;
        // run the seed through splitmix once so small consecutive seeds do
        // not produce correlated mt19937 states
        return std::mt19937_64(splitmix64(s));
    }

    std::mt19937_64 gen_;
};

}  // namespace synthgap
