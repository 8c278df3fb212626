// SPDX-License-Identifier: Apache-2.0
// Compiled with -mavx2 -mfma.

#define ERESFD_SIMD_NS avx2
#define ERESFD_SIMD_NAME "avx2"
#define ERESFD_SIMD_TABLE kSimdAvx2
#define ERESFD_LANES 8
#define ERESFD_GEMM_ROWS 6
#define ERESFD_GEMM_COLS 16
#define ERESFD_DIRECT_ROWS 4
#include "simd_impl.inc"
