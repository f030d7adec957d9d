#include "pathgrade/rng.hpp"

#include <cmath>
#include <numbers>

namespace pathgrade {

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // u1 in (0, 1] keeps the log argument positive.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

int Rng::uniform_int(int n) {
    if (n <= 0) throw RangeError("uniform_int: bound must be positive");
    const auto un = static_cast<std::uint64_t>(n);
    const std::uint64_t reject_below = (0 - un) % un;  // 2^64 mod n
    std::uint64_t x;
    do {
        x = engine_();
    } while (x < reject_below);
    return static_cast<int>(x % un);
}

std::vector<int> Rng::permutation(int n) {
    std::vector<int> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
    shuffle(v);
    return v;
}

namespace {

// splitmix64 finalizer; decorrelates nearby seeds and stream ids.
std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

Rng Rng::split(std::uint64_t stream) const {
    return Rng(mix(seed_ ^ mix(stream)));
}

}  // namespace pathgrade
