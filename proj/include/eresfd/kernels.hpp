// SPDX-License-Identifier: Apache-2.0
//
// Convolution, pooling, upsampling and fusion kernels.
//
// Every kernel has two implementations selected by KernelOptions::path: a
// naive reference (direct summation loops, single-threaded) and an optimized
// one (im2col + blocked GEMM for dense convolution, row-vectorized direct loops
// for depthwise). The reference path is what tests diff the optimized path
// against.

#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <string>
#include <vector>

#include "eresfd/tensor.hpp"

namespace eresfd {

enum class KernelPath { kReference, kOptimized };

struct KernelOptions {
    KernelPath path = KernelPath::kOptimized;
    /// Worker threads inside a kernel. 1 is the deterministic single-threaded
    /// mode; work is split by output position so results do not depend on it.
    int threads = 1;
};

struct ConvSpec {
    int kernel_h = 1;
    int kernel_w = 1;
    int stride_h = 1;
    int stride_w = 1;
    int pad_h = 0;
    int pad_w = 0;
    int in_channels = 1;
    int out_channels = 1;
    int groups = 1;
    bool has_bias = false;

    /// Square kernel with "same"-style padding (k - 1) / 2.
    static ConvSpec square(int kernel, int stride, int in_channels, int out_channels, bool has_bias = false,
                           int groups = 1);

    bool is_depthwise() const { return groups > 1 && groups == in_channels && groups == out_channels; }

    /// Throws std::invalid_argument on non-positive sizes or bad grouping.
    void validate() const;

    /// floor((h + 2p - k) / s) + 1 per spatial dim; throws if non-positive or
    /// if `in.c` does not match in_channels.
    Shape output_shape(const Shape& in) const;

    Shape weight_shape() const { return Shape{out_channels, in_channels / groups, kernel_h, kernel_w}; }

    bool operator==(const ConvSpec&) const = default;
};

struct ConvWeights {
    Tensor kernel;            // (out_channels, in_channels / groups, kh, kw)
    std::vector<float> bias;  // empty, or one entry per output channel

    /// Throws if shapes disagree with `spec`.
    void check(const ConvSpec& spec) const;
};

struct BatchNormParams {
    std::vector<float> gamma;
    std::vector<float> beta;
    std::vector<float> running_mean;
    std::vector<float> running_var;
    float epsilon = 1e-5f;
};

struct PoolSpec {
    int kernel = 2;
    int stride = 2;
    int padding = 0;

    Shape output_shape(const Shape& in) const;
    bool operator==(const PoolSpec&) const = default;
};

Tensor conv2d(const Tensor& x, const ConvSpec& spec, const ConvWeights& w, const KernelOptions& opts = {});

/// Same contract as conv2d but requires groups == in_channels == out_channels.
Tensor depthwise_conv2d(const Tensor& x, const ConvSpec& spec, const ConvWeights& w, const KernelOptions& opts = {});

/// Max pooling; padded positions never win (-infinity semantics).
Tensor maxpool2d(const Tensor& x, const PoolSpec& pool, const KernelOptions& opts = {});

Tensor upsample_nearest2x(const Tensor& x);

/// Top-left crop to (h, w). Used to align an upsampled map with a lateral
/// input whose size was odd before downsampling.
Tensor crop_spatial(const Tensor& x, std::int64_t h, std::int64_t w);

/// Folds inference-mode normalization into the preceding convolution. The
/// result always carries a bias.
ConvWeights fold_batchnorm(const ConvSpec& spec, const ConvWeights& w, const BatchNormParams& bn);

/// Reference (unfused) normalization applied to a conv output.
Tensor apply_batchnorm(const Tensor& x, const BatchNormParams& bn);

/// out = sum_i relu(w_i) * x_i / (sum_i relu(w_i) + epsilon)
Tensor weighted_fusion(std::span<const Tensor> xs, std::span<const float> weights, float epsilon = 1e-4f);

/// Reduces (n, k + 1, h, w) class logits to (n, 2, h, w): channel 0 becomes
/// the max over the first k background logits, channel 1 the face logit.
Tensor maxout_background(const Tensor& x, int background_channels);

/// Instruction set of the optimized inner loops in use: "avx512", "avx2" or
/// "baseline". Chosen once from the CPU; ERESFD_ISA can force a lower one.
std::string_view kernel_isa();

namespace detail {

// Row-major C[m x n] = A[m x k] * B[k x n] + bias[m] (bias may be empty).
void sgemm_bias(int m, int n, int k, const float* a, const float* b, std::span<const float> bias, float* c,
                int threads);

}  // namespace detail

}  // namespace eresfd
