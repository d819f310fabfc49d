#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace percept {

inline constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Derives an independent child seed for a named sub-task (e.g. one seed per
// perceptual dimension).
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
    std::uint64_t state = seed ^ (fnv1a64(label) * 0x9E3779B97F4A7C15ull);
    return splitmix64(state);
}

// Deterministic xoshiro256++ generator. Sampling helpers are hand-rolled
// (std::uniform_*_distribution output is implementation-defined, which would
// break cross-platform reproducibility of checkpoints and splits).
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t s = seed;
        for (auto& w : state_) w = splitmix64(s);
    }

    // Named substream: the same (seed, name) always yields the same sequence,
    // and distinct names yield independent streams.
    Rng(std::uint64_t seed, std::string_view stream)
        : Rng(seed ^ (fnv1a64(stream) * 0x9E3779B97F4A7C15ull)) {}

    std::uint64_t u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Unbiased integer in [0, n) via mask rejection.
    std::uint64_t below(std::uint64_t n) {
        if (n <= 1) return 0;
        std::uint64_t mask = ~std::uint64_t{0} >> countl_zero64(n - 1);
        std::uint64_t x;
        do {
            x = u64() & mask;
        } while (x >= n);
        return x;
    }

    // [0, 1) with 53 bits of precision.
    double unit() { return static_cast<double>(u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            using std::swap;
            swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices from [0, n), ascending.
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k) {
        std::vector<std::size_t> pool(n);
        for (std::size_t i = 0; i < n; ++i) pool[i] = i;
        for (std::size_t i = 0; i < k && i + 1 < n; ++i) {
            std::size_t j = i + static_cast<std::size_t>(below(n - i));
            std::swap(pool[i], pool[j]);
        }
        if (k > n) k = n;
        std::vector<std::size_t> out(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    static int countl_zero64(std::uint64_t x) {
        int n = 0;
        for (std::uint64_t probe = std::uint64_t{1} << 63; probe && !(x & probe); probe >>= 1) ++n;
        return n;
    }

    std::uint64_t state_[4];
};

}  // namespace percept
