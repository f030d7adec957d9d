#pragma once
// Seeded random source with portable draw semantics.
//
// std::mt19937_64 output is pinned by the standard, but the std::*_distribution
// wrappers are not; every distribution here is hand-rolled so that a seed fixes
// the exact byte stream across compilers. All training, splitting, sampling,
// and init randomness must come through this class.

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "pathgrade/errors.hpp"

namespace pathgrade {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; caches the second draw of each pair.
    double normal();
    double normal(double mu, double sigma) { return mu + sigma * normal(); }

    // Uniform in [0, n); rejection sampling, no modulo bias.
    int uniform_int(int n);

    bool bernoulli(double p) { return uniform() < p; }

    // Fisher-Yates, high index down.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            const int j = uniform_int(i + 1);
            std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
        }
    }

    std::vector<int> permutation(int n);

    // Independent substream; derived from the original seed, not engine state.
    Rng split(std::uint64_t stream) const;

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace pathgrade
