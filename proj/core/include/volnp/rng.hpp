#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace volnp {

// Deterministic random source. The standard distributions are
// implementation-defined, so every draw here is built directly from the
// mt19937_64 bit stream; identical seeds give identical streams on any
// platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1) with 53 random bits
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller (one value per call)
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        // u1 = 0 would give log(0); shift into (0, 1]
        u1 = 1.0 - u1;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    // uniform integer in [0, n), rejection-sampled to avoid modulo bias
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t v = gen_();
        while (v >= limit) v = gen_();
        return v % n;
    }

    int uniform_int(int lo, int hi) {  // inclusive range [lo, hi]
        return lo + static_cast<int>(uniform_int(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {  // Fisher-Yates
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(static_cast<std::uint64_t>(i)));
            std::swap(v[i - 1], v[j]);
        }
    }

    // first k entries of a random permutation of {0, ..., n-1}
    std::vector<int> sample_without_replacement(int n, int k) {
        std::vector<int> idx(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
        for (int i = 0; i < k; ++i) {
            int j = i + static_cast<int>(uniform_int(static_cast<std::uint64_t>(n - i)));
            std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
        }
        idx.resize(static_cast<std::size_t>(k));
        return idx;
    }

private:
    std::mt19937_64 gen_;
};

// splitmix64 finalizer; used to derive independent child seeds from
// (seed, stream, index) without correlated streams.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (a + 1) + 0xbf58476d1ce4e5b9ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace volnp
