#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace modfuse {

// Deterministic random source. Distributions are implemented by hand on top
// of mt19937_64 because the standard library's distribution objects are not
// pinned by the standard; this keeps streams bit-identical across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), state_(split_mix(seed)) {}

    std::uint64_t next_u64() {
        state_ = state_ * 6364136223846793005ULL + 1442695040888963407ULL;
        std::uint64_t x = state_;
        x ^= x >> 33;
        x *= 0xff51afd7ed558ccdULL;
        x ^= x >> 33;
        x *= 0xc4ceb9fe1a85ec53ULL;
        x ^= x >> 33;
        return x;
    }

    // Uniform in [0, 1) with 24 bits of mantissa, exactly representable in f32.
    float uniform01() {
        return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f;
    }

    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform01(); }

    // Box-Muller; consumes two uniforms per pair, caches the second.
    float normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 1e-12) u1 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
        const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = static_cast<float>(r * std::sin(a));
        has_spare_ = true;
        return static_cast<float>(r * std::cos(a));
    }

    // Uniform integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next_u64() % span);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(next_u64() % i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // Independent child stream; `stream` selects it deterministically.
    Rng fork(std::uint64_t stream) const {
        return Rng(split_mix(seed_ ^ (0x9e3779b97f4a7c15ULL * (stream + 1))));
    }

    std::uint64_t seed() const { return seed_; }

private:
    static std::uint64_t split_mix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::uint64_t seed_;
    std::uint64_t state_;
    bool has_spare_ = false;
    float spare_ = 0.0f;
};

}  // namespace modfuse
