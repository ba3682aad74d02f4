// NEON variants for aarch64. Double-precision NEON (2 lanes) is modest, but
// still roughly halves the time in dot/axpy heavy paths.

#if defined(__aarch64__)

#include <arm_neon.h>

#include <cmath>
#include <cstddef>

#include "cldc/kernels.hpp"

namespace cldc::kernels {
namespace {

double dot_neon(const double* x, const double* y, std::size_t n) {
    float64x2_t acc0 = vdupq_n_f64(0.0);
    float64x2_t acc1 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc0 = vfmaq_f64(acc0, vld1q_f64(x + i), vld1q_f64(y + i));
        acc1 = vfmaq_f64(acc1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
    }
    double out = vaddvq_f64(vaddq_f64(acc0, acc1));
    for (; i < n; ++i) out += x[i] * y[i];
    return out;
}

void axpy_neon(double a, const double* x, double* y, std::size_t n) {
    float64x2_t av = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), av, vld1q_f64(x + i)));
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void scale_neon(double a, double* y, std::size_t n) {
    float64x2_t av = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(y + i, vmulq_f64(av, vld1q_f64(y + i)));
    }
    for (; i < n; ++i) y[i] *= a;
}

void relu_neon(const double* z, double* out, std::size_t n) {
    float64x2_t zero = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(out + i, vmaxq_f64(zero, vld1q_f64(z + i)));
    }
    for (; i < n; ++i) out[i] = z[i] > 0.0 ? z[i] : 0.0;
}

void relu_backward_neon(const double* z, const double* da, double* dz, std::size_t n) {
    float64x2_t zero = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        uint64x2_t mask = vcgtq_f64(vld1q_f64(z + i), zero);
        uint64x2_t val = vandq_u64(mask, vreinterpretq_u64_f64(vld1q_f64(da + i)));
        vst1q_f64(dz + i, vreinterpretq_f64_u64(val));
    }
    for (; i < n; ++i) dz[i] = z[i] > 0.0 ? da[i] : 0.0;
}

void rmsprop_neon(double* p, const double* g, double* acc, double lr, double decay,
                  double eps, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        acc[i] = decay * acc[i] + (1.0 - decay) * g[i] * g[i];
        p[i] -= lr * g[i] / std::sqrt(acc[i] + eps);
    }
}

double sumsq_neon(const double* x, std::size_t n) { return dot_neon(x, x, n); }

}  // namespace

const Table& neon() {
    static const Table t{
        "neon",    dot_neon,           axpy_neon,    scale_neon,
        relu_neon, relu_backward_neon, rmsprop_neon, sumsq_neon,
    };
    return t;
}

}  // namespace cldc::kernels

#endif  // aarch64
