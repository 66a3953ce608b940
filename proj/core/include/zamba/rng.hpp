#pragma once

#include <cmath>
#include <cstdint>

namespace zamba {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Counter-based generator: state is (seed, counter), so a stream can be
// serialized, replayed or forked without consuming hidden state.
class Rng {
public:
    Rng() : Rng(0) {}
    explicit Rng(uint64_t seed, uint64_t counter = 0) : seed_(seed), counter_(counter) {}

    static Rng stream(uint64_t seed, uint64_t stream_id) {
        return Rng(splitmix64(seed ^ splitmix64(stream_id)));
    }

    uint64_t next_u64() { return splitmix64(seed_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

    // uniform in [0, 1)
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // [0, n)
    uint64_t next_below(uint64_t n) { return n ? next_u64() % n : 0; }

    // Box-Muller without a cached spare: always consumes exactly two draws,
    // keeping the counter advance independent of call history.
    double normal(double mean = 0.0, double stddev = 1.0) {
        const double u1 = 1.0 - next_double();
        const double u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586 * u2);
    }

    uint64_t seed() const { return seed_; }
    uint64_t counter() const { return counter_; }
    void set_counter(uint64_t c) { counter_ = c; }

private:
    uint64_t seed_;
    uint64_t counter_;
};

// FNV-1a, used to derive per-parameter and per-slot hash streams by name.
inline uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ULL) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace zamba
