// SPDX-License-Identifier: Apache-2.0
//
// Inner loops compiled once per instruction set (baseline, AVX2+FMA, AVX-512)
// and selected at runtime. Every variant accumulates in the same order, so a
// given variant is deterministic; variants may differ in the last bits
// because of fused multiply-add.

#pragma once

#include <cstdint>
#include <string_view>

#include "eresfd/kernels.hpp"

namespace eresfd::detail {

struct SimdKernels {
    std::string_view name;
    /// Output columns per gemm_tiles task.
    int gemm_cols;
    /// Output channels per direct-convolution tile (packing block size).
    int direct_block;

    /// C[m x n] = A[m x k] * B[k x n] (+ bias per row) for column tiles
    /// [begin, end) of width gemm_cols. bias may be null.
    void (*gemm_tiles)(std::int64_t begin, std::int64_t end, int m, int n, int k, const float* a, const float* b,
                       const float* bias, float* c);

    /// Direct stride-1 convolution on a zero-padded input (row pitch wp,
    /// hp rows per channel). Task t covers output row t % out_h of channel
    /// block t / out_h. Rows of the padded input must have at least
    /// kDirectSlack floats of slack past the last valid column.
    void (*direct_rows)(std::int64_t begin, std::int64_t end, const float* padded, std::int64_t hp, std::int64_t wp,
                        const ConvSpec& spec, const float* packed, const float* bias, float* out, std::int64_t out_h,
                        std::int64_t out_w);

    /// Depthwise convolution of planes [begin, end) of an (n*c, h, w) input.
    /// bias may be null.
    void (*depthwise_planes)(std::int64_t begin, std::int64_t end, const float* x, std::int64_t channels,
                             std::int64_t in_h, std::int64_t in_w, const ConvSpec& spec, const float* kernel,
                             const float* bias, float* out, std::int64_t out_h, std::int64_t out_w);
};

inline constexpr int kDirectSlack = 32;

/// Best variant the CPU supports. ERESFD_ISA=baseline|avx2|avx512 in the
/// environment restricts the choice (ignored if unsupported).
const SimdKernels& simd_kernels();

extern const SimdKernels kSimdBaseline;
#if defined(__x86_64__)
extern const SimdKernels kSimdAvx2;
extern const SimdKernels kSimdAvx512;
#endif

}  // namespace eresfd::detail
