#pragma once

// Thread-cap handling and deterministic reductions.
//
// Parallel kernels in this project follow one discipline: each loop index
// writes only its own output slot, and any reduction happens afterwards as an
// ordered pairwise sum over the assembled array.  That makes results identical
// regardless of thread count, so the serial reference path (force_serial or
// HARMBOUND_THREADS=1) must agree bit-for-bit with the parallel one — a
// property the unit tests and the benchmark both check.

#include <cstdint>
#include <cstdlib>
#include <span>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace harmbound {

// Effective thread cap: hardware/OpenMP default, clamped by HARMBOUND_THREADS.
inline int max_threads() {
#ifdef _OPENMP
    int t = omp_get_max_threads();
#else
    int t = 1;
#endif
    if (const char* env = std::getenv("HARMBOUND_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && v >= 1 && v < 4096 && v < t) t = static_cast<int>(v);
    }
    return t < 1 ? 1 : t;
}

// Parallel loop over [0, n).  f(i) must touch only state owned by index i.
template <class F>
void parallel_for(std::int64_t n, F&& f, bool force_serial = false) {
    const int threads = force_serial ? 1 : max_threads();
    if (threads <= 1 || n < 2) {
        for (std::int64_t i = 0; i < n; ++i) f(i);
        return;
    }
#ifdef _OPENMP
#pragma omp parallel for num_threads(threads) schedule(static)
    for (std::int64_t i = 0; i < n; ++i) f(i);
#else
    for (std::int64_t i = 0; i < n; ++i) f(i);
#endif
}

// Ordered pairwise summation: deterministic and far more accurate than a
// left-to-right accumulation on long vectors.
inline double pairwise_sum(std::span<const double> v) {
    const std::size_t n = v.size();
    if (n <= 32) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(v.subspan(0, half)) + pairwise_sum(v.subspan(half));
}

inline double pairwise_mean(std::span<const double> v) {
    return v.empty() ? 0.0 : pairwise_sum(v) / static_cast<double>(v.size());
}

} // namespace harmbound
