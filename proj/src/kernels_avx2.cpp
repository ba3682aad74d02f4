// AVX2+FMA variants. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after a runtime cpuid check (see kernels_dispatch.cpp).

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>
#include <cstddef>

#include "cldc/kernels.hpp"

namespace cldc::kernels {
namespace {

double dot_avx2(const double* x, const double* y, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    }
    __m256d acc = _mm256_add_pd(acc0, acc1);
    __m128d lo = _mm256_castpd256_pd128(acc);
    __m128d hi = _mm256_extractf128_pd(acc, 1);
    __m128d s = _mm_add_pd(lo, hi);
    double out = _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
    for (; i < n; ++i) out += x[i] * y[i];
    return out;
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
    __m256d av = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d yv = _mm256_loadu_pd(y + i);
        yv = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yv);
        _mm256_storeu_pd(y + i, yv);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void scale_avx2(double a, double* y, std::size_t n) {
    __m256d av = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_mul_pd(av, _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) y[i] *= a;
}

void relu_avx2(const double* z, double* out, std::size_t n) {
    __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_max_pd(zero, _mm256_loadu_pd(z + i)));
    }
    for (; i < n; ++i) out[i] = z[i] > 0.0 ? z[i] : 0.0;
}

void relu_backward_avx2(const double* z, const double* da, double* dz, std::size_t n) {
    __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(z + i), zero, _CMP_GT_OQ);
        _mm256_storeu_pd(dz + i, _mm256_and_pd(mask, _mm256_loadu_pd(da + i)));
    }
    for (; i < n; ++i) dz[i] = z[i] > 0.0 ? da[i] : 0.0;
}

void rmsprop_avx2(double* p, const double* g, double* acc, double lr, double decay,
                  double eps, std::size_t n) {
    __m256d decay_v = _mm256_set1_pd(decay);
    __m256d omd_v = _mm256_set1_pd(1.0 - decay);
    __m256d lr_v = _mm256_set1_pd(lr);
    __m256d eps_v = _mm256_set1_pd(eps);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d gv = _mm256_loadu_pd(g + i);
        __m256d av = _mm256_mul_pd(decay_v, _mm256_loadu_pd(acc + i));
        av = _mm256_fmadd_pd(omd_v, _mm256_mul_pd(gv, gv), av);
        _mm256_storeu_pd(acc + i, av);
        __m256d denom = _mm256_sqrt_pd(_mm256_add_pd(av, eps_v));
        __m256d pv = _mm256_loadu_pd(p + i);
        pv = _mm256_sub_pd(pv, _mm256_div_pd(_mm256_mul_pd(lr_v, gv), denom));
        _mm256_storeu_pd(p + i, pv);
    }
    for (; i < n; ++i) {
        acc[i] = decay * acc[i] + (1.0 - decay) * g[i] * g[i];
        p[i] -= lr * g[i] / std::sqrt(acc[i] + eps);
    }
}

double sumsq_avx2(const double* x, std::size_t n) { return dot_avx2(x, x, n); }

}  // namespace

const Table& avx2() {
    static const Table t{
        "avx2",    dot_avx2,           axpy_avx2,    scale_avx2,
        relu_avx2, relu_backward_avx2, rmsprop_avx2, sumsq_avx2,
    };
    return t;
}

}  // namespace cldc::kernels

#endif  // x86-64
