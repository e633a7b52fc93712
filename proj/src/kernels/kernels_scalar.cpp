#include "vida/kernels.hpp"

#include <cmath>

namespace vida::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void ema_scalar(double alpha, const double* src, double* dst, std::size_t n) {
    const double beta = 1.0 - alpha;
    for (std::size_t i = 0; i < n; ++i) dst[i] = alpha * dst[i] + beta * src[i];
}

double squared_distance_scalar(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

void adam_scalar(const AdamCoefficients& c, double* param, const double* grad, double* m, double* v,
                 std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grad[i];
        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
        const double m_hat = m[i] / c.bias_correction1;
        const double v_hat = v[i] / c.bias_correction2;
        param[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
}

}  // namespace

const Table& scalar_table() {
    static const Table table{dot_scalar, axpy_scalar, ema_scalar, squared_distance_scalar, adam_scalar};
    return table;
}

}  // namespace vida::kernels
