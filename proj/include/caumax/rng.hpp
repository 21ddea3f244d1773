#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace caumax::rng {

// SplitMix64 finalizer. Used to turn (root seed, label, indices) into
// well-mixed stream seeds so that every component draws from its own
// independent stream regardless of execution order.
inline std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive(std::uint64_t root, std::string_view label,
                            std::initializer_list<std::uint64_t> indices = {}) {
    std::uint64_t h = mix(root ^ 0x243f6a8885a308d3ULL);
    for (unsigned char c : label) h = mix(h ^ c);
    for (std::uint64_t i : indices) h = mix(h ^ i);
    return h;
}

// Deterministic random stream. Raw engine output is mandated by the
// standard; all transforms below are hand-rolled so results are
// bit-identical across standard library implementations.
class Stream {
public:
    explicit Stream(std::uint64_t seed) : eng_(seed) {}
    Stream(std::uint64_t root, std::string_view label,
           std::initializer_list<std::uint64_t> indices = {})
        : eng_(derive(root, label, indices)) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform on the open interval (0,1); never returns an endpoint.
    double uniform01() {
        return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Unbiased integer in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do { x = eng_(); } while (x >= limit);
        return x % n;
    }

    bool bernoulli(double p) { return uniform01() < p; }

    // Box-Muller without spare caching: two uniforms per draw, so the
    // engine consumption per call is fixed.
    double normal(double mean = 0.0, double sd = 1.0) {
        const double u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + sd * r * std::cos(2.0 * M_PI * u2);
    }

    double gumbel() {
        const double u = uniform01();
        return -std::log(-std::log(u));
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace caumax::rng
