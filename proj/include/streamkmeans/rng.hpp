#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace streamkm {

// xoshiro256++ (Blackman & Vigna), seeded through SplitMix64. The generator
// is fixed here so that a (seed, stream) pair yields bit-identical draw
// sequences on every platform: only uint64 arithmetic and IEEE double
// multiplication are involved. Streams are decorrelated by folding the
// stream counter into the SplitMix64 seed with a golden-ratio multiplier.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : seed_(seed), stream_(stream) {
        std::uint64_t x = seed ^ (0x9E3779B97F4A7C15ULL * (stream + 1));
        for (auto& si : s_) si = splitmix64(x);
        // a few warm-up rounds so near-zero states disperse
        for (int i = 0; i < 8; ++i) (void)next_u64();
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

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

    // uniform on [0, 1), 53 random bits
    double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // integer in [0, n)
    std::uint64_t below(std::uint64_t n) {
        // multiply-shift; bias is negligible for the n used here (n << 2^64)
        return std::uint64_t((__uint128_t(next_u64()) * n) >> 64);
    }

    // standard normal via Box-Muller; the spare value is cached so draws
    // stay a pure function of the state
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double m = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = m * std::sin(a);
        has_spare_ = true;
        return m * std::cos(a);
    }

private:
    static std::uint64_t splitmix64(std::uint64_t& x) {
        x += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    static std::uint64_t rotl(std::uint64_t v, int b) {
        return (v << b) | (v >> (64 - b));
    }

    std::array<std::uint64_t, 4> s_{};
    std::uint64_t seed_ = 0;
    std::uint64_t stream_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace streamkm
