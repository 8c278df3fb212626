// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <string_view>

#include "simd.hpp"

namespace eresfd::detail {

namespace {

const SimdKernels& pick() {
    const char* env = std::getenv("ERESFD_ISA");
    const std::string_view want = env ? env : "";
#if defined(__x86_64__)
    __builtin_cpu_init();
    const bool has512 = __builtin_cpu_supports("avx512f") && __builtin_cpu_supports("fma");
    const bool has2 = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    if (want == "baseline") return kSimdBaseline;
    if (want == "avx2" && has2) return kSimdAvx2;
    if (has512 && want != "avx2") return kSimdAvx512;
    if (has2) return kSimdAvx2;
#endif
    return kSimdBaseline;
}

}  // namespace

const SimdKernels& simd_kernels() {
    static const SimdKernels& chosen = pick();
    return chosen;
}

}  // namespace eresfd::detail
