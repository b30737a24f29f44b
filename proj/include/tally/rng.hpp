#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace tally {

/// Seeded pseudorandom source with a fixed, documented algorithm identity.
///
/// Engine: std::mt19937_64 (its output sequence is fixed by the C++ standard).
/// The distributions are implemented here rather than taken from <random>
/// because the standard leaves their algorithms to the vendor:
///   uniform01      (x >> 11) * 2^-53
///   uniform_index  modulo with rejection below (2^64 mod n)
///   normal         Marsaglia polar method, spare value cached
///   poisson        count of unit-rate exponential arrivals before `mean`
/// Given equal seeds, any implementation following this list reproduces
/// the same draws.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t x = engine_();
            if (x >= threshold) return x % n;
        }
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform01() - 1.0;
            v = 2.0 * uniform01() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    std::uint64_t poisson(double mean) {
        if (mean <= 0.0) return 0;
        std::uint64_t k = 0;
        double t = 0.0;
        for (;;) {
            t -= std::log1p(-uniform01());
            if (t > mean) return k;
            ++k;
        }
    }

    /// Fisher-Yates, drawing from the back.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::vector<std::size_t> permutation(std::size_t n) {
        std::vector<std::size_t> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = i;
        shuffle(p);
        return p;
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// splitmix64 finalizer; used to derive independent sub-seeds.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace tally
