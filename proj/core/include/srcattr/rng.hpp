#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace srcattr {

/// splitmix64 step; good enough to decorrelate derived seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

/// Derives an independent sub-stream seed from a master seed, a role tag
/// and an optional index. Identical inputs give identical seeds.
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                          std::uint64_t index = 0);

/// Deterministic random source. The engine is std::mt19937_64 (whose output
/// sequence the standard pins down exactly); the distributions are
/// implemented here rather than taken from <random> because the standard
/// leaves their sequences implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1).
    double uniform01();

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi);

    /// Standard normal via Box-Muller; caches the second draw.
    double normal();

    /// Uniform index in [0, n). n must be > 0.
    std::size_t index(std::size_t n);

    /// Fisher-Yates shuffle, in place.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[index(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// {0, 1, ..., n-1} shuffled with a throwaway Rng(seed).
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

}  // namespace srcattr
