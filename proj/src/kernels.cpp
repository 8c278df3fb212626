// SPDX-License-Identifier: Apache-2.0

#include "eresfd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

#include "parallel.hpp"
#include "simd.hpp"

namespace eresfd {

namespace {

std::int64_t conv_out_dim(std::int64_t in, int kernel, int stride, int pad) {
    const std::int64_t span = in + 2 * static_cast<std::int64_t>(pad) - kernel;
    if (span < 0) return 0;
    return span / stride + 1;
}

// Smallest o with o * stride - pad + k >= 0, and one past the largest o with
// o * stride - pad + k < in; clamped to [0, out).
void valid_range(std::int64_t in, std::int64_t out, int stride, int pad, int k, std::int64_t& lo,
                 std::int64_t& hi) {
    const std::int64_t first = static_cast<std::int64_t>(pad) - k;
    lo = first > 0 ? (first + stride - 1) / stride : 0;
    const std::int64_t last = in - 1 + pad - k;
    hi = last < 0 ? 0 : last / stride + 1;
    lo = std::min(lo, out);
    hi = std::clamp(hi, lo, out);
}

Tensor conv2d_reference(const Tensor& x, const ConvSpec& spec, const ConvWeights& w) {
    const Shape in = x.shape();
    const Shape out_shape = spec.output_shape(in);
    Tensor out(out_shape);
    const int cin_g = spec.in_channels / spec.groups;
    const int cout_g = spec.out_channels / spec.groups;
    for (std::int64_t n = 0; n < in.n; ++n) {
        for (std::int64_t oc = 0; oc < out_shape.c; ++oc) {
            const std::int64_t g = oc / cout_g;
            for (std::int64_t oh = 0; oh < out_shape.h; ++oh) {
                for (std::int64_t ow = 0; ow < out_shape.w; ++ow) {
                    double acc = w.bias.empty() ? 0.0 : w.bias[static_cast<std::size_t>(oc)];
                    for (std::int64_t ic = 0; ic < cin_g; ++ic) {
                        for (std::int64_t kh = 0; kh < spec.kernel_h; ++kh) {
                            const std::int64_t ih = oh * spec.stride_h - spec.pad_h + kh;
                            if (ih < 0 || ih >= in.h) continue;
                            for (std::int64_t kw = 0; kw < spec.kernel_w; ++kw) {
                                const std::int64_t iw = ow * spec.stride_w - spec.pad_w + kw;
                                if (iw < 0 || iw >= in.w) continue;
                                acc += static_cast<double>(x.at(n, g * cin_g + ic, ih, iw)) * w.kernel.at(oc, ic, kh, kw);
                            }
                        }
                    }
                    out.at(n, oc, oh, ow) = static_cast<float>(acc);
                }
            }
        }
    }
    return out;
}

// Unfolds one group of input channels into a (cin_g*kh*kw) x (oh*ow) matrix.
void im2col(const float* src, std::int64_t channels, std::int64_t h, std::int64_t w, const ConvSpec& spec,
            std::int64_t out_h, std::int64_t out_w, float* col) {
    const std::int64_t out_plane = out_h * out_w;
    for (std::int64_t c = 0; c < channels; ++c) {
        const float* plane = src + c * h * w;
        for (int kh = 0; kh < spec.kernel_h; ++kh) {
            for (int kw = 0; kw < spec.kernel_w; ++kw) {
                float* row = col + ((c * spec.kernel_h + kh) * spec.kernel_w + kw) * out_plane;
                std::int64_t lo = 0, hi = 0;
                valid_range(w, out_w, spec.stride_w, spec.pad_w, kw, lo, hi);
                for (std::int64_t oh = 0; oh < out_h; ++oh) {
                    float* dst = row + oh * out_w;
                    const std::int64_t ih = oh * spec.stride_h - spec.pad_h + kh;
                    if (ih < 0 || ih >= h) {
                        std::fill_n(dst, out_w, 0.0f);
                        continue;
                    }
                    const float* line = plane + ih * w - spec.pad_w + kw;
                    std::fill_n(dst, lo, 0.0f);
                    if (spec.stride_w == 1) {
                        std::copy(line + lo, line + hi, dst + lo);
                    } else {
                        for (std::int64_t ow = lo; ow < hi; ++ow) dst[ow] = line[ow * spec.stride_w];
                    }
                    std::fill(dst + hi, dst + out_w, 0.0f);
                }
            }
        }
    }
}

Tensor conv2d_gemm(const Tensor& x, const ConvSpec& spec, const ConvWeights& w, const KernelOptions& opts) {
    const Shape in = x.shape();
    const Shape out_shape = spec.output_shape(in);
    Tensor out(out_shape);
    const int cin_g = spec.in_channels / spec.groups;
    const int cout_g = spec.out_channels / spec.groups;
    const std::int64_t k = static_cast<std::int64_t>(cin_g) * spec.kernel_h * spec.kernel_w;
    const std::int64_t out_plane = out_shape.plane();
    const bool pointwise = spec.kernel_h == 1 && spec.kernel_w == 1 && spec.stride_h == 1 && spec.stride_w == 1 &&
                           spec.pad_h == 0 && spec.pad_w == 0;
    std::vector<float> col(pointwise ? 0 : static_cast<std::size_t>(k * out_plane));
    const float* kernel = w.kernel.data().data();
    for (std::int64_t n = 0; n < in.n; ++n) {
        for (int g = 0; g < spec.groups; ++g) {
            const float* src = x.plane(n, static_cast<std::int64_t>(g) * cin_g);
            const float* b = src;
            if (!pointwise) {
                im2col(src, cin_g, in.h, in.w, spec, out_shape.h, out_shape.w, col.data());
                b = col.data();
            }
            std::span<const float> bias;
            if (!w.bias.empty()) bias = std::span<const float>(w.bias).subspan(static_cast<std::size_t>(g) * cout_g, cout_g);
            detail::sgemm_bias(cout_g, static_cast<int>(out_plane), static_cast<int>(k), kernel + g * cout_g * k, b,
                               bias, out.plane(n, static_cast<std::int64_t>(g) * cout_g), opts.threads);
        }
    }
    return out;
}

Tensor depthwise_direct(const Tensor& x, const ConvSpec& spec, const ConvWeights& w, const KernelOptions& opts) {
    if (spec.kernel_w > 16) return conv2d_reference(x, spec, w);
    Tensor out(spec.output_shape(x.shape()));
    detail::parallel_for(x.shape().n * x.shape().c, opts.threads, [&](std::int64_t begin, std::int64_t end) {
        detail::simd_kernels().depthwise_planes(begin, end, x.data().data(), x.shape().c, x.shape().h, x.shape().w,
                                                spec, w.kernel.data().data(), w.bias.empty() ? nullptr : w.bias.data(),
                                                out.data().data(), out.shape().h, out.shape().w);
    });
    return out;
}

// Direct convolution for stride-1, ungrouped convs with a shallow reduction
// (cin * kh * kw). The input is zero-padded once and the weights are packed in
// blocks of output channels; accumulation runs in (ic, kh, kw) order.
bool use_direct(const ConvSpec& spec, const Shape& out) {
    const std::int64_t depth = static_cast<std::int64_t>(spec.in_channels) * spec.kernel_h * spec.kernel_w;
    return spec.groups == 1 && spec.stride_h == 1 && spec.stride_w == 1 && spec.kernel_h * spec.kernel_w > 1 &&
           out.w >= 8 && depth <= 1152;
}

Tensor conv2d_direct(const Tensor& x, const ConvSpec& spec, const ConvWeights& w, const KernelOptions& opts) {
    const detail::SimdKernels& simd = detail::simd_kernels();
    const int block = simd.direct_block;
    const Shape in = x.shape();
    const Shape out_shape = spec.output_shape(in);
    Tensor out(out_shape);
    const std::int64_t kdepth = static_cast<std::int64_t>(spec.in_channels) * spec.kernel_h * spec.kernel_w;
    const std::int64_t blocks = (spec.out_channels + block - 1) / block;
    std::vector<float> packed(static_cast<std::size_t>(blocks * kdepth * block), 0.0f);
    std::vector<float> bias(static_cast<std::size_t>(blocks * block), 0.0f);
    const float* kernel = w.kernel.data().data();
    for (int oc = 0; oc < spec.out_channels; ++oc) {
        float* dst = packed.data() + (oc / block) * kdepth * block + oc % block;
        for (std::int64_t i = 0; i < kdepth; ++i) dst[i * block] = kernel[oc * kdepth + i];
        if (!w.bias.empty()) bias[static_cast<std::size_t>(oc)] = w.bias[static_cast<std::size_t>(oc)];
    }
    const std::int64_t hp = in.h + 2 * spec.pad_h;
    const std::int64_t wp = in.w + 2 * spec.pad_w + detail::kDirectSlack;
    std::vector<float> padded(static_cast<std::size_t>(in.c * hp * wp));
    for (std::int64_t n = 0; n < in.n; ++n) {
        std::fill(padded.begin(), padded.end(), 0.0f);
        for (std::int64_t c = 0; c < in.c; ++c) {
            for (std::int64_t r = 0; r < in.h; ++r) {
                std::copy_n(x.plane(n, c) + r * in.w, in.w, padded.data() + (c * hp + r + spec.pad_h) * wp + spec.pad_w);
            }
        }
        float* dst = out.plane(n, 0);
        detail::parallel_for(blocks * out_shape.h, opts.threads, [&](std::int64_t begin, std::int64_t end) {
            simd.direct_rows(begin, end, padded.data(), hp, wp, spec, packed.data(), bias.data(), dst, out_shape.h,
                             out_shape.w);
        });
    }
    return out;
}

}  // namespace

ConvSpec ConvSpec::square(int kernel, int stride, int in_channels, int out_channels, bool has_bias, int groups) {
    ConvSpec s;
    s.kernel_h = s.kernel_w = kernel;
    s.stride_h = s.stride_w = stride;
    s.pad_h = s.pad_w = (kernel - 1) / 2;
    s.in_channels = in_channels;
    s.out_channels = out_channels;
    s.groups = groups;
    s.has_bias = has_bias;
    return s;
}

void ConvSpec::validate() const {
    if (kernel_h <= 0 || kernel_w <= 0 || stride_h <= 0 || stride_w <= 0) {
        throw std::invalid_argument("conv spec: kernel and stride must be positive");
    }
    if (pad_h < 0 || pad_w < 0) throw std::invalid_argument("conv spec: padding must be non-negative");
    if (in_channels <= 0 || out_channels <= 0 || groups <= 0) {
        throw std::invalid_argument("conv spec: channels and groups must be positive");
    }
    if (in_channels % groups != 0 || out_channels % groups != 0) {
        throw std::invalid_argument("conv spec: channels " + std::to_string(in_channels) + "->" +
                                    std::to_string(out_channels) + " not divisible by groups " + std::to_string(groups));
    }
}

Shape ConvSpec::output_shape(const Shape& in) const {
    validate();
    if (in.c != in_channels) {
        throw std::invalid_argument("conv: input has " + std::to_string(in.c) + " channels, spec expects " +
                                    std::to_string(in_channels));
    }
    const Shape out{in.n, out_channels, conv_out_dim(in.h, kernel_h, stride_h, pad_h),
                    conv_out_dim(in.w, kernel_w, stride_w, pad_w)};
    if (out.h <= 0 || out.w <= 0) {
        throw std::invalid_argument("conv: non-positive output size for input " + in.str());
    }
    return out;
}

Shape PoolSpec::output_shape(const Shape& in) const {
    if (kernel <= 0 || stride <= 0 || padding < 0) throw std::invalid_argument("pool spec: bad parameters");
    if (padding >= kernel) throw std::invalid_argument("pool spec: padding must be smaller than kernel");
    const Shape out{in.n, in.c, conv_out_dim(in.h, kernel, stride, padding), conv_out_dim(in.w, kernel, stride, padding)};
    if (out.h <= 0 || out.w <= 0) {
        throw std::invalid_argument("maxpool: non-positive output size for input " + in.str());
    }
    return out;
}

void ConvWeights::check(const ConvSpec& spec) const {
    if (kernel.shape() != spec.weight_shape()) {
        throw std::invalid_argument("conv weights: kernel shape " + kernel.shape().str() + " but spec needs " +
                                    spec.weight_shape().str());
    }
    if (!bias.empty() && static_cast<int>(bias.size()) != spec.out_channels) {
        throw std::invalid_argument("conv weights: bias has " + std::to_string(bias.size()) + " entries for " +
                                    std::to_string(spec.out_channels) + " output channels");
    }
}

Tensor conv2d(const Tensor& x, const ConvSpec& spec, const ConvWeights& w, const KernelOptions& opts) {
    spec.output_shape(x.shape());
    w.check(spec);
    if (opts.path == KernelPath::kReference) return conv2d_reference(x, spec, w);
    if (spec.is_depthwise()) return depthwise_direct(x, spec, w, opts);
    if (use_direct(spec, spec.output_shape(x.shape()))) return conv2d_direct(x, spec, w, opts);
    return conv2d_gemm(x, spec, w, opts);
}

Tensor depthwise_conv2d(const Tensor& x, const ConvSpec& spec, const ConvWeights& w, const KernelOptions& opts) {
    if (!(spec.groups == spec.in_channels && spec.groups == spec.out_channels)) {
        throw std::invalid_argument("depthwise_conv2d: groups " + std::to_string(spec.groups) +
                                    " must equal in/out channels " + std::to_string(spec.in_channels) + "/" +
                                    std::to_string(spec.out_channels));
    }
    spec.output_shape(x.shape());
    w.check(spec);
    if (opts.path == KernelPath::kReference) return conv2d_reference(x, spec, w);
    return depthwise_direct(x, spec, w, opts);
}

Tensor maxpool2d(const Tensor& x, const PoolSpec& pool, const KernelOptions& opts) {
    const Shape in = x.shape();
    const Shape out_shape = pool.output_shape(in);
    Tensor out(out_shape);
    const int threads = opts.path == KernelPath::kReference ? 1 : opts.threads;
    detail::parallel_for(in.n * in.c, threads, [&](std::int64_t begin, std::int64_t end) {
        for (std::int64_t p = begin; p < end; ++p) {
            const float* src = x.data().data() + p * in.plane();
            float* dst = out.data().data() + p * out_shape.plane();
            for (std::int64_t oh = 0; oh < out_shape.h; ++oh) {
                const std::int64_t h0 = oh * pool.stride - pool.padding;
                const std::int64_t h_lo = std::max<std::int64_t>(h0, 0);
                const std::int64_t h_hi = std::min<std::int64_t>(h0 + pool.kernel, in.h);
                for (std::int64_t ow = 0; ow < out_shape.w; ++ow) {
                    const std::int64_t w0 = ow * pool.stride - pool.padding;
                    const std::int64_t w_lo = std::max<std::int64_t>(w0, 0);
                    const std::int64_t w_hi = std::min<std::int64_t>(w0 + pool.kernel, in.w);
                    float best = -std::numeric_limits<float>::infinity();
                    for (std::int64_t ih = h_lo; ih < h_hi; ++ih) {
                        for (std::int64_t iw = w_lo; iw < w_hi; ++iw) best = std::max(best, src[ih * in.w + iw]);
                    }
                    dst[oh * out_shape.w + ow] = best;
                }
            }
        }
    });
    return out;
}

Tensor upsample_nearest2x(const Tensor& x) {
    const Shape in = x.shape();
    const Shape out_shape{in.n, in.c, in.h * 2, in.w * 2};
    Tensor out(out_shape);
    for (std::int64_t p = 0; p < in.n * in.c; ++p) {
        const float* src = x.data().data() + p * in.plane();
        float* dst = out.data().data() + p * out_shape.plane();
        for (std::int64_t oh = 0; oh < out_shape.h; ++oh) {
            const float* line = src + (oh / 2) * in.w;
            float* row = dst + oh * out_shape.w;
            for (std::int64_t ow = 0; ow < out_shape.w; ++ow) row[ow] = line[ow / 2];
        }
    }
    return out;
}

Tensor crop_spatial(const Tensor& x, std::int64_t h, std::int64_t w) {
    const Shape in = x.shape();
    if (h > in.h || w > in.w || h < 0 || w < 0) {
        throw std::invalid_argument("crop_spatial: cannot crop " + in.str() + " to " + std::to_string(h) + "x" +
                                    std::to_string(w));
    }
    if (h == in.h && w == in.w) return x;
    Tensor out(Shape{in.n, in.c, h, w});
    for (std::int64_t p = 0; p < in.n * in.c; ++p) {
        const float* src = x.data().data() + p * in.plane();
        float* dst = out.data().data() + p * h * w;
        for (std::int64_t r = 0; r < h; ++r) std::copy_n(src + r * in.w, w, dst + r * w);
    }
    return out;
}

ConvWeights fold_batchnorm(const ConvSpec& spec, const ConvWeights& w, const BatchNormParams& bn) {
    w.check(spec);
    const auto channels = static_cast<std::size_t>(spec.out_channels);
    if (bn.gamma.size() != channels || bn.beta.size() != channels || bn.running_mean.size() != channels ||
        bn.running_var.size() != channels) {
        throw std::invalid_argument("fold_batchnorm: normalization vectors must have " + std::to_string(channels) +
                                    " entries");
    }
    ConvWeights folded{w.kernel, std::vector<float>(channels)};
    const std::int64_t per_channel = spec.weight_shape().numel() / spec.out_channels;
    auto k = folded.kernel.data();
    for (std::size_t oc = 0; oc < channels; ++oc) {
        const double scale = static_cast<double>(bn.gamma[oc]) /
                             std::sqrt(static_cast<double>(bn.running_var[oc]) + static_cast<double>(bn.epsilon));
        for (std::int64_t i = 0; i < per_channel; ++i) {
            float& v = k[oc * static_cast<std::size_t>(per_channel) + static_cast<std::size_t>(i)];
            v = static_cast<float>(v * scale);
        }
        const double bias = w.bias.empty() ? 0.0 : w.bias[oc];
        folded.bias[oc] = static_cast<float>(bn.beta[oc] + (bias - bn.running_mean[oc]) * scale);
    }
    return folded;
}

Tensor apply_batchnorm(const Tensor& x, const BatchNormParams& bn) {
    const Shape s = x.shape();
    if (bn.gamma.size() != static_cast<std::size_t>(s.c)) {
        throw std::invalid_argument("apply_batchnorm: parameter length does not match channel count");
    }
    Tensor out(s);
    for (std::int64_t n = 0; n < s.n; ++n) {
        for (std::int64_t c = 0; c < s.c; ++c) {
            const auto i = static_cast<std::size_t>(c);
            const float inv = 1.0f / std::sqrt(bn.running_var[i] + bn.epsilon);
            const float* src = x.plane(n, c);
            float* dst = out.plane(n, c);
            for (std::int64_t p = 0; p < s.plane(); ++p) {
                dst[p] = (src[p] - bn.running_mean[i]) * inv * bn.gamma[i] + bn.beta[i];
            }
        }
    }
    return out;
}

Tensor weighted_fusion(std::span<const Tensor> xs, std::span<const float> weights, float epsilon) {
    if (xs.empty()) throw std::invalid_argument("weighted_fusion: no inputs");
    if (xs.size() != weights.size()) {
        throw std::invalid_argument("weighted_fusion: " + std::to_string(xs.size()) + " inputs but " +
                                    std::to_string(weights.size()) + " weights");
    }
    float total = 0.0f;
    std::vector<float> clamped(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) {
        clamped[i] = std::max(weights[i], 0.0f);
        total += clamped[i];
    }
    const float norm = 1.0f / (total + epsilon);
    Tensor out(xs.front().shape());
    auto dst = out.data();
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i].shape() != out.shape()) {
            throw std::invalid_argument("weighted_fusion: shape mismatch " + out.shape().str() + " vs " +
                                        xs[i].shape().str());
        }
        const float scale = clamped[i] * norm;
        auto src = xs[i].data();
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += scale * src[j];
    }
    return out;
}

Tensor maxout_background(const Tensor& x, int background_channels) {
    const Shape s = x.shape();
    if (background_channels < 1 || s.c != background_channels + 1) {
        throw std::invalid_argument("maxout_background: expected " + std::to_string(background_channels + 1) +
                                    " channels, got " + std::to_string(s.c));
    }
    Tensor out(Shape{s.n, 2, s.h, s.w});
    for (std::int64_t n = 0; n < s.n; ++n) {
        float* bg = out.plane(n, 0);
        std::copy_n(x.plane(n, 0), s.plane(), bg);
        for (int c = 1; c < background_channels; ++c) {
            const float* src = x.plane(n, c);
            for (std::int64_t p = 0; p < s.plane(); ++p) bg[p] = std::max(bg[p], src[p]);
        }
        std::copy_n(x.plane(n, background_channels), s.plane(), out.plane(n, 1));
    }
    return out;
}

std::string_view kernel_isa() { return detail::simd_kernels().name; }

namespace detail {

void sgemm_bias(int m, int n, int k, const float* a, const float* b, std::span<const float> bias, float* c,
                int threads) {
    const SimdKernels& simd = simd_kernels();
    const float* bias_ptr = bias.empty() ? nullptr : bias.data();
    const std::int64_t col_tiles = (n + simd.gemm_cols - 1) / simd.gemm_cols;
    parallel_for(col_tiles, threads, [&](std::int64_t begin, std::int64_t end) {
        simd.gemm_tiles(begin, end, m, n, k, a, b, bias_ptr, c);
    });
}

}  // namespace detail

}  // namespace eresfd
