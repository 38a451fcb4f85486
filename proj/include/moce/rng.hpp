#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace moce {

// Deterministic splittable PRNG (splitmix64 core). A stream is identified by
// its seed; split() derives an independent child stream from the seed and a
// key, so child streams do not depend on how many values the parent has
// already produced. Not cryptographic.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : seed_(seed), state_(seed) {}

    std::uint64_t seed() const { return seed_; }

    RngStream split(std::uint64_t key) const {
        std::uint64_t h = mix(seed_ ^ 0x2545f4914f6cdd1dULL);
        h = mix(h + 0x9e3779b97f4a7c15ULL * (key + 1));
        return RngStream(h);
    }

    RngStream split(std::string_view name) const { return split(fnv1a(name)); }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix(state_);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in (0, 1]; safe as a log() argument.
    double next_open_uniform() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller. Consumes two draws per value; the
    // second variate of the pair is discarded to keep the stream stateless
    // beyond its counter.
    double next_gaussian() {
        const double u1 = next_open_uniform();
        const double u2 = next_uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Uniform integer in [0, n). Modulo bias is negligible at desk scale.
    std::uint64_t next_below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        return h;
    }

    std::uint64_t seed_;
    std::uint64_t state_;
};

} // namespace moce
