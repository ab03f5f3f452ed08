#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace csnet {

// SplitMix64 stream. Independent substreams come from hashing a component
// tag and an index into the seed, so dataset sample i or training step t
// can be regenerated without replaying the others.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t index = 0)
        : state_(mix(mix(seed ^ 0x6a09e667f3bcc909ULL) ^ mix(stream + 0x3c6ef372fe94f82bULL) ^
                     mix(index * 0x9e3779b97f4a7c15ULL + 0xbb67ae8584caa73bULL))) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix(state_);
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t r;
        do {
            r = next_u64();
        } while (r >= limit);
        return r % n;
    }

    // Box-Muller; the second variate is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    std::vector<double> normal_vector(std::size_t n) {
        std::vector<double> v(n);
        for (auto& x : v) x = normal();
        return v;
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[below(i)]);
    }

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Stream tags for the run components that draw randomness.
namespace streams {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kData = 2;
inline constexpr std::uint64_t kShuffle = 3;
inline constexpr std::uint64_t kTrainNoise = 4;
inline constexpr std::uint64_t kEval = 5;
}  // namespace streams

}  // namespace csnet
