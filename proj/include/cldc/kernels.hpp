#pragma once

#include <cstddef>
#include <string>

namespace cldc::kernels {

// Dense double-precision primitives behind the network code. Each operation
// has a portable scalar reference implementation plus optional SIMD variants
// (AVX2+FMA on x86-64, NEON on aarch64). The active table is chosen once at
// startup from CPU features; CLDC_KERNELS=scalar|avx2|neon|auto overrides.
//
// SIMD variants reorder additions, so results may differ from scalar in the
// last bits. Within one process the dispatch is fixed, which keeps runs
// deterministic on a given machine.

struct Table {
    const char* name;

    // dot product of x and y, length n
    double (*dot)(const double* x, const double* y, std::size_t n);

    // y[i] += a * x[i]
    void (*axpy)(double a, const double* x, double* y, std::size_t n);

    // y[i] *= a
    void (*scale)(double a, double* y, std::size_t n);

    // out[i] = max(z[i], 0)
    void (*relu)(const double* z, double* out, std::size_t n);

    // dz[i] = (z[i] > 0) ? da[i] : 0
    void (*relu_backward)(const double* z, const double* da, double* dz, std::size_t n);

    // acc[i] = decay*acc[i] + (1-decay)*g[i]^2 ; p[i] -= lr * g[i] / sqrt(acc[i] + eps)
    void (*rmsprop)(double* p, const double* g, double* acc, double lr, double decay,
                    double eps, std::size_t n);

    // sum of squares
    double (*sumsq)(const double* x, std::size_t n);
};

const Table& scalar();

#if defined(__x86_64__) || defined(_M_X64)
const Table& avx2();
bool avx2_supported();
#endif
#if defined(__aarch64__)
const Table& neon();
#endif

/// Table selected from CPU features and the CLDC_KERNELS environment
/// variable. Resolved once; later env changes have no effect.
const Table& active();

/// Name of the active table ("scalar", "avx2", "neon").
std::string active_name();

}  // namespace cldc::kernels
