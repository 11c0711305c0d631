#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

#include "rbsteer/errors.hpp"

namespace rbsteer {

// 64-bit FNV-1a. Used for deriving named RNG streams and for content hashes
// in report headers.
inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// splitmix64 finalizer; spreads low-entropy seeds over the full word.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// One run seed fans out into independent substreams keyed by name, so the
// order in which components draw never affects each other.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) {
    return mix64(seed ^ fnv1a64(stream));
}

// Deterministic random source. mt19937_64 output is fixed by the standard,
// and all draws go through explicit integer -> double conversion, so the
// same seed yields the same sequence on every platform.
class RngStream {
  public:
    explicit RngStream(std::uint64_t seed) : gen_(seed) {}
    RngStream(std::uint64_t seed, std::string_view stream) : gen_(derive_seed(seed, stream)) {}

    // Uniform in [0, 1) with 53 random bits.
    double next_unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Index sampled proportionally to probs (a sub-distribution is fine as
    // long as something is positive); walks the cumulative sum.
    std::size_t categorical(std::span<const double> probs) {
        double total = 0.0;
        for (double p : probs) {
            if (p > 0.0) total += p;
        }
        if (total <= 0.0) throw Error("categorical sample from all-zero distribution");
        double u = next_unit() * total;
        double cum = 0.0;
        std::size_t last_positive = probs.size();
        for (std::size_t i = 0; i < probs.size(); ++i) {
            if (probs[i] <= 0.0) continue;
            last_positive = i;
            cum += probs[i];
            if (u < cum) return i;
        }
        return last_positive;  // u fell into floating-point slack at the top
    }

    std::size_t uniform_index(std::size_t n) {
        if (n == 0) throw Error("uniform_index over empty range");
        auto i = static_cast<std::size_t>(next_unit() * static_cast<double>(n));
        return i < n ? i : n - 1;
    }

  private:
    std::mt19937_64 gen_;
};

}  // namespace rbsteer
