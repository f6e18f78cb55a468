#pragma once

#include <cmath>
#include <cstdint>

namespace retsim::rng {

// SplitMix64 finalizer. All randomness in the simulator is derived by hashing
// (seed, index, channel, purpose) tuples through this, so every draw is a pure
// function of its key and runs are bitwise reproducible regardless of call
// order or threading.
inline std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t key(std::uint64_t seed, std::uint64_t a = 0,
                         std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t h = mix(seed);
    h = mix(h ^ a);
    h = mix(h ^ b);
    h = mix(h ^ c);
    return h;
}

// Uniform in [0,1) with 53 random bits.
inline double unit(std::uint64_t k) {
    return static_cast<double>(k >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller on two derived uniforms.
inline double gaussian(std::uint64_t k) {
    const double u1 = unit(mix(k ^ 0x5bf03635d6a2de9cULL));
    const double u2 = unit(mix(k ^ 0x8da3dd4c0ecb3e05ULL));
    const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    return r * std::cos(6.283185307179586476925286766559 * u2);
}

// Small sequential stream for places that consume an unbounded number of
// draws (weight init, batch shuffles). Still keyed, still deterministic.
class Stream {
  public:
    explicit Stream(std::uint64_t seed) : state_(mix(seed)) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix(state_);
    }
    double next_unit() { return unit(next_u64()); }
    double next_gaussian() { return gaussian(next_u64()); }
    // Uniform in [lo, hi).
    double next_uniform(double lo, double hi) {
        return lo + (hi - lo) * next_unit();
    }
    // Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  private:
    std::uint64_t state_;
};

// Fisher-Yates with the keyed stream; std::shuffle is not portable bit-wise.
template <typename Vec>
void shuffle(Vec& v, Stream& s) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(s.next_below(i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace retsim::rng
