#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace idccp {

// Counter-based generator: draw n is splitmix64(seed, n). The full state is
// (seed, counter), which is what checkpoints persist. Normals use Box-Muller
// without caching a spare value, so no hidden state exists.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0, std::uint64_t counter = 0) noexcept
        : seed_(seed), counter_(counter) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept { return mix(seed_ * 0x9E3779B97F4A7C15ULL + counter_++); }

    // Uniform in [0, 1).
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) noexcept {
        if (n <= 1) return 0;
        // Lemire-style rejection keeps the draw unbiased.
        const std::uint64_t limit = max() - max() % n;
        std::uint64_t x;
        do {
            x = (*this)();
        } while (x >= limit);
        return x % n;
    }

    double normal() noexcept {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

    // Independent stream keyed on this generator's seed and a label.
    Rng fork(std::uint64_t stream) const noexcept {
        return Rng(mix(seed_ ^ mix(stream + 0x632BE59BD9B4E019ULL)), 0);
    }

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t counter() const noexcept { return counter_; }

    friend bool operator==(const Rng&, const Rng&) = default;

private:
    static std::uint64_t mix(std::uint64_t z) noexcept {
        z += 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::uint64_t counter_;
};

} // namespace idccp
