// SPDX-License-Identifier: Apache-2.0

#define ERESFD_SIMD_NS baseline
#define ERESFD_SIMD_NAME "baseline"
#define ERESFD_SIMD_TABLE kSimdBaseline
#define ERESFD_LANES 4
#define ERESFD_GEMM_ROWS 4
#define ERESFD_GEMM_COLS 8
#define ERESFD_DIRECT_ROWS 4
#include "simd_impl.inc"
