#pragma once
// Dense double-precision inner loops with a scalar reference implementation
// and an AVX2/FMA variant chosen once at startup from CPUID.
//
// Every caller goes through the dispatch table so the two backends can be
// swapped at runtime (tests, VIDA_FORCE_SCALAR=1) and compared directly.

#include <cstddef>
#include <span>
#include <string_view>

namespace vida::kernels {

enum class Backend { scalar, avx2 };

struct AdamCoefficients {
    double lr;
    double beta1;
    double beta2;
    double eps;
    double bias_correction1;  // 1 - beta1^t
    double bias_correction2;  // 1 - beta2^t
};

struct Table {
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // dst = alpha * dst + (1 - alpha) * src
    void (*ema)(double alpha, const double* src, double* dst, std::size_t n);
    double (*squared_distance)(const double* a, const double* b, std::size_t n);
    void (*adam)(const AdamCoefficients& c, double* param, const double* grad, double* m, double* v,
                 std::size_t n);
};

const Table& scalar_table();
// Only valid when backend_available(Backend::avx2).
const Table& avx2_table();

bool backend_available(Backend b);
Backend active_backend();
// Throws ParameterError if the backend is unavailable on this CPU.
void set_backend(Backend b);
std::string_view backend_name(Backend b);

const Table& active();

inline double dot(std::span<const double> a, std::span<const double> b) {
    return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    active().axpy(alpha, x.data(), y.data(), x.size());
}

inline void ema(double alpha, std::span<const double> src, std::span<double> dst) {
    active().ema(alpha, src.data(), dst.data(), src.size());
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    return active().squared_distance(a.data(), b.data(), a.size());
}

}  // namespace vida::kernels
