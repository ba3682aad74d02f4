#include <cmath>
#include <cstddef>

#include "cldc/kernels.hpp"

namespace cldc::kernels {
namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale_scalar(double a, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] *= a;
}

void relu_scalar(const double* z, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = z[i] > 0.0 ? z[i] : 0.0;
}

void relu_backward_scalar(const double* z, const double* da, double* dz, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dz[i] = z[i] > 0.0 ? da[i] : 0.0;
}

void rmsprop_scalar(double* p, const double* g, double* acc, double lr, double decay,
                    double eps, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        acc[i] = decay * acc[i] + (1.0 - decay) * g[i] * g[i];
        p[i] -= lr * g[i] / std::sqrt(acc[i] + eps);
    }
}

double sumsq_scalar(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
    return acc;
}

}  // namespace

const Table& scalar() {
    static const Table t{
        "scalar",    dot_scalar,           axpy_scalar,    scale_scalar,
        relu_scalar, relu_backward_scalar, rmsprop_scalar, sumsq_scalar,
    };
    return t;
}

}  // namespace cldc::kernels
