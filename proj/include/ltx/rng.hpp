#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace ltx {

// Counter-based generator built on the SplitMix64 finalizer. The state is a
// (key, counter) pair: draws depend only on how many values were consumed,
// so independent streams never interleave and replays are exact across
// platforms (std:: distributions are implementation-defined and avoided).
inline uint64_t mix64(uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline uint64_t fnv1a64(std::string_view s) noexcept {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Sub-seed derivation rule: hash the purpose label, fold in the parent seed
// and an index, finalize with mix64. Documented contract for all CLI seeding.
inline uint64_t derive_seed(uint64_t seed, std::string_view label, uint64_t index = 0) noexcept {
    return mix64(seed ^ fnv1a64(label) ^ (0x9e3779b97f4a7c15ull * (index + 1)));
}

class CounterRng {
public:
    CounterRng() = default;
    explicit CounterRng(uint64_t key) noexcept : key_(key) {}

    uint64_t key() const noexcept { return key_; }
    uint64_t counter() const noexcept { return counter_; }
    void set_counter(uint64_t c) noexcept { counter_ = c; }

    uint64_t next_u64() noexcept { return mix64(key_ + 0x9e3779b97f4a7c15ull * (++counter_)); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller; consumes exactly two draws, no cached
    // spare, so the counter advances predictably.
    double gaussian() noexcept {
        const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Uniform integer in [0, n), n >= 1. Rejection-free modulo is acceptable
    // here: n is tiny relative to 2^64 in every call site.
    uint64_t below(uint64_t n) noexcept { return next_u64() % n; }

private:
    uint64_t key_ = 0;
    uint64_t counter_ = 0;
};

}  // namespace ltx
