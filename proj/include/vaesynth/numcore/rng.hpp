#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string_view>
#include <utility>

namespace vaesynth::numcore {

/// 64-bit FNV-1a, used to turn stream labels into key material.
constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed of the named child stream `label` under `seed`.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) noexcept {
    return splitmix64(splitmix64(seed) ^ fnv1a64(label));
}

/// Counter-based generator: draw i of a stream is a pure function of (seed, label, i).
///
/// Every value is produced from integer mixing only, so uniform draws are identical on
/// every platform. Gaussian draws go through std::log/std::cos/std::sqrt.
class Rng {
   public:
    explicit Rng(std::uint64_t seed) noexcept : seed_(seed), key_(splitmix64(seed)) {}

    /// Independent stream for `label`; consuming one stream never moves another.
    static Rng stream(std::uint64_t seed, std::string_view label) noexcept {
        return Rng(derive_seed(seed, label));
    }
    Rng child(std::string_view label) const noexcept { return stream(seed_, label); }

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t counter() const noexcept { return counter_; }

    std::uint64_t next_u64() noexcept { return splitmix64(key_ ^ splitmix64(counter_++)); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Unbiased integer in [0, n); n must be positive.
    std::uint64_t below(std::uint64_t n) noexcept {
        const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
        std::uint64_t r = next_u64();
        while (r >= limit) r = next_u64();
        return r % n;
    }

    /// Standard normal via Box-Muller; consumes exactly two counter values.
    double normal() noexcept {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    template <typename T>
    void fill_normal(std::span<T> out, double mean = 0.0, double stddev = 1.0) noexcept {
        for (auto& v : out) v = static_cast<T>(mean + stddev * normal());
    }

    /// Fisher-Yates with this generator's bounded draws.
    template <typename Seq>
    void shuffle(Seq& seq) noexcept {
        for (std::size_t i = seq.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            using std::swap;
            swap(seq[i - 1], seq[j]);
        }
    }

   private:
    std::uint64_t seed_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace vaesynth::numcore
