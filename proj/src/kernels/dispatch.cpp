#include <atomic>
#include <cstdlib>
#include <cstring>

#include "vida/errors.hpp"
#include "vida/kernels.hpp"

namespace vida::kernels {
namespace {

#if defined(VIDA_HAVE_AVX2_KERNELS)
bool cpu_has_avx2() {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
#endif

Backend detect() {
    if (const char* env = std::getenv("VIDA_FORCE_SCALAR"); env && std::strcmp(env, "0") != 0) {
        return Backend::scalar;
    }
    return backend_available(Backend::avx2) ? Backend::avx2 : Backend::scalar;
}

std::atomic<Backend>& current() {
    static std::atomic<Backend> backend{detect()};
    return backend;
}

}  // namespace

bool backend_available(Backend b) {
    if (b == Backend::scalar) return true;
#if defined(VIDA_HAVE_AVX2_KERNELS)
    static const bool has_avx2 = cpu_has_avx2();
    return has_avx2;
#else
    return false;
#endif
}

Backend active_backend() { return current().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
    if (!backend_available(b)) {
        throw ParameterError("kernel backend '" + std::string(backend_name(b)) + "' is not available on this CPU");
    }
    current().store(b, std::memory_order_relaxed);
}

std::string_view backend_name(Backend b) { return b == Backend::avx2 ? "avx2" : "scalar"; }

const Table& active() {
#if defined(VIDA_HAVE_AVX2_KERNELS)
    if (active_backend() == Backend::avx2) return avx2_table();
#endif
    return scalar_table();
}

}  // namespace vida::kernels
