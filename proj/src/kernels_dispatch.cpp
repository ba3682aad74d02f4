#include <cstdlib>
#include <string>

#include "cldc/errors.hpp"
#include "cldc/kernels.hpp"

namespace cldc::kernels {

#if defined(__x86_64__) || defined(_M_X64)
bool avx2_supported() {
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
#endif

namespace {

const Table& select() {
    const char* req = std::getenv("CLDC_KERNELS");
    std::string mode = req ? req : "auto";
    if (mode == "scalar") return scalar();
#if defined(__x86_64__) || defined(_M_X64)
    if (mode == "avx2") {
        if (!avx2_supported()) throw ConfigError("CLDC_KERNELS=avx2 but CPU lacks AVX2/FMA");
        return avx2();
    }
    if (mode == "auto") return avx2_supported() ? avx2() : scalar();
#elif defined(__aarch64__)
    if (mode == "neon" || mode == "auto") return neon();
#else
    if (mode == "auto") return scalar();
#endif
    throw ConfigError("unknown CLDC_KERNELS value: " + mode);
}

}  // namespace

const Table& active() {
    static const Table& t = select();
    return t;
}

std::string active_name() { return active().name; }

}  // namespace cldc::kernels
