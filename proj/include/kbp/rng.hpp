#pragma once

// Counter-based random numbers. Every draw is a pure function of
// (seed, stream, counter), so two simulations that share a seed see the same
// uniforms at the same (stream, counter) regardless of evaluation order.
// The mixing function is Widynski's "squares" generator (64-bit output,
// five rounds); keys are derived from (seed, stream) with splitmix64.

#include <cstdint>

namespace kbp {

/// Named streams used by the graph sampler.
enum class Stream : std::uint64_t {
    types = 1,
    thresholds = 2,
    edges = 3,
    training = 4,
};

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t squares64(std::uint64_t ctr, std::uint64_t key) noexcept {
    std::uint64_t x = ctr * key;
    const std::uint64_t y = x;
    const std::uint64_t z = y + key;
    x = x * x + y;
    x = (x >> 32) | (x << 32);
    x = x * x + z;
    x = (x >> 32) | (x << 32);
    x = x * x + y;
    x = (x >> 32) | (x << 32);
    const std::uint64_t t = x = x * x + z;
    x = (x >> 32) | (x << 32);
    return t ^ ((x * x + y) >> 32);
}

}  // namespace detail

class CounterRng {
public:
    constexpr CounterRng(std::uint64_t seed, Stream stream) noexcept
        : key_(detail::splitmix64(detail::splitmix64(seed) ^ static_cast<std::uint64_t>(stream)) | 1ULL) {}

    constexpr std::uint64_t bits(std::uint64_t counter) const noexcept { return detail::squares64(counter, key_); }

    /// Uniform in [0,1) with 53 random bits.
    constexpr double uniform(std::uint64_t counter) const noexcept {
        return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
    }

    /// Uniform in (0,1), safe for logarithms.
    constexpr double open_uniform(std::uint64_t counter) const noexcept {
        return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
    }

private:
    std::uint64_t key_;
};

}  // namespace kbp
