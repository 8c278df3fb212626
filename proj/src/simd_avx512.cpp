// SPDX-License-Identifier: Apache-2.0
// Compiled with -mavx512f -mavx2 -mfma.

#define ERESFD_SIMD_NS avx512
#define ERESFD_SIMD_NAME "avx512"
#define ERESFD_SIMD_TABLE kSimdAvx512
#define ERESFD_LANES 16
#define ERESFD_GEMM_ROWS 8
#define ERESFD_GEMM_COLS 32
#define ERESFD_DIRECT_ROWS 8
#include "simd_impl.inc"
