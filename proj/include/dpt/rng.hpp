#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dpt {

// 64-bit FNV-1a; folds stream labels and parameter names into seed material.
constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Seed for a named sub-stream ("init", "stage1/sampling", ...). All randomness
// in a run flows from one root seed through these labels, so each stage can be
// replayed on its own.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) noexcept {
    return splitmix64(seed ^ fnv1a64(label));
}

// Deterministic random source. The engine is std::mt19937_64, whose output
// sequence is pinned by the C++ standard; every value mapping below is spelled
// out here instead of using std::*_distribution (which the standard leaves
// implementation-defined), so streams are identical across platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::uint64_t uniform_index(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        std::uint64_t x = next_u64();
        while (x < threshold) x = next_u64();
        return x % n;
    }

    int uniform_int(int n) { return static_cast<int>(uniform_index(static_cast<std::uint64_t>(n))); }

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 engine_;
};

} // namespace dpt
