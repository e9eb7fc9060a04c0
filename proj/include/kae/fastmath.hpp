#pragma once

#include <bit>
#include <cmath>
#include <cstdint>

namespace kae {

// Branchless exponential for softmax weights. Pure FP + integer ops (no libm
// call, no data-dependent branches), so it auto-vectorizes and is
// bit-deterministic across runs and thread counts. Relative error ~1e-14 for
// x in [-708, 709]; below that the result flushes to +0 (skipping the
// denormal sliver), above it saturates to +Inf slightly before exp's true
// overflow point. Softmax arguments are always <= 0, well inside the sweet
// spot.
inline double fast_exp(double x) {
    constexpr double log2e = 1.4426950408889634074;
    constexpr double ln2_hi = 6.93147180369123816490e-01;
    constexpr double ln2_lo = 1.90821492927058770002e-10;
    // Round x*log2e to the nearest integer by shifting into [2^52, 2^53),
    // where the ulp is exactly 1; the mantissa bits of the shifted value then
    // hold the integer, so no libm rounding call is needed.
    constexpr double shifter = 6755399441055744.0;  // 1.5 * 2^52
    const double t = x * log2e + shifter;
    const double n = t - shifter;
    std::int64_t ni =
        std::bit_cast<std::int64_t>(t) - std::bit_cast<std::int64_t>(shifter);
    // Clamp the binary exponent in integer space (integer min/max stay
    // branch-free): -1023 pins the scale to +0, +1024 pins it to +Inf.
    ni = ni < -1023 ? -1023 : (ni > 1024 ? 1024 : ni);
    // Cody-Waite split keeps r = x - n*ln2 accurate near the boundaries.
    const double r = (x - n * ln2_hi) - n * ln2_lo;
    double p = 1.0 / 39916800.0;  // 1/11!
    p = p * r + 1.0 / 3628800.0;
    p = p * r + 1.0 / 362880.0;
    p = p * r + 1.0 / 40320.0;
    p = p * r + 1.0 / 5040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    const double scale = std::bit_cast<double>((ni + 1023) << 52);
    return p * scale;
}

// Fixed 8-lane reductions: the lane accumulators vectorize to one SIMD
// register without reassociating a scalar chain, and the fold order is fixed,
// so results stay bit-deterministic while running at vector speed.
inline double dot8(const double* a, const double* b, std::size_t n) {
    double acc[8] = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
        for (std::size_t u = 0; u < 8; ++u) acc[u] += a[j + u] * b[j + u];
    }
    double s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (; j < n; ++j) s += a[j] * b[j];
    return s;
}

inline double sum8(const double* a, std::size_t n) {
    double acc[8] = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
        for (std::size_t u = 0; u < 8; ++u) acc[u] += a[j + u];
    }
    double s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (; j < n; ++j) s += a[j];
    return s;
}

inline double max8(const double* a, std::size_t n) {
    if (n < 8) {
        double m = a[0];
        for (std::size_t j = 1; j < n; ++j) m = a[j] > m ? a[j] : m;
        return m;
    }
    double acc[8];
    for (std::size_t u = 0; u < 8; ++u) acc[u] = a[u];
    std::size_t j = 8;
    for (; j + 8 <= n; j += 8) {
        for (std::size_t u = 0; u < 8; ++u) acc[u] = a[j + u] > acc[u] ? a[j + u] : acc[u];
    }
    double m = acc[0];
    for (std::size_t u = 1; u < 8; ++u) m = acc[u] > m ? acc[u] : m;
    for (; j < n; ++j) m = a[j] > m ? a[j] : m;
    return m;
}

}  // namespace kae
