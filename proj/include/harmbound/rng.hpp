#pragma once

// Deterministic random number generation.
//
// All randomness in the library flows through this header so that results are
// reproducible bit-for-bit across runs and platforms:
//   - streams are derived from a single user seed via splitmix64 mixing, so
//     independent work items (folds, replications, chunks) get decorrelated
//     generators without sharing state;
//   - uniforms use the explicit 53-bit mantissa mapping rather than
//     std::uniform_real_distribution, whose output is implementation-defined;
//   - normals use Box-Muller with an explicit cached spare for the same reason.

#include <cmath>
#include <cstdint>
#include <random>

namespace harmbound {

// One splitmix64 step; also usable as a stateless mixer of 64-bit values.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derive a child seed for a named work item.  Mixing is non-commutative in the
// arguments, so (seed, 1, 2) and (seed, 2, 1) give unrelated streams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t s = seed;
    std::uint64_t z = splitmix64(s);
    s ^= a + 0x632be59bd9b4e019ULL;
    z ^= splitmix64(s);
    s ^= b + 0x9e6c63d0876a9a47ULL;
    z ^= splitmix64(s);
    return z;
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // Uniform on [0, 1): top 53 bits of the engine output scaled by 2^-53.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; generates pairs, caches the spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // 1 - uniform() lies in (0, 1], keeping the log argument positive.
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    int bernoulli(double p) { return uniform() < p ? 1 : 0; }

    std::uint64_t next_u64() { return gen_(); }

  private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace harmbound
