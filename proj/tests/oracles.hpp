// SPDX-License-Identifier: Apache-2.0
//
// Independent scalar oracles. Nothing here calls into the library except for
// the plain data types, so a shared bug cannot hide on both sides.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "eresfd/detect.hpp"
#include "eresfd/kernels.hpp"
#include "eresfd/tensor.hpp"

namespace oracle {

using eresfd::ConvSpec;
using eresfd::DetBox;
using eresfd::Shape;
using eresfd::Tensor;

inline Tensor random_tensor(Shape s, std::mt19937& rng, float lo = -1.0f, float hi = 1.0f) {
    std::uniform_real_distribution<float> dist(lo, hi);
    Tensor t(s);
    for (float& v : t.data()) v = dist(rng);
    return t;
}

inline std::vector<float> random_vector(std::size_t n, std::mt19937& rng) {
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    std::vector<float> v(n);
    for (float& x : v) x = dist(rng);
    return v;
}

// Grouped convolution, double accumulation, explicit bounds checks for padding.
inline Tensor conv2d(const Tensor& x, const ConvSpec& s, const Tensor& kernel, const std::vector<float>& bias) {
    const Shape in = x.shape();
    const std::int64_t oh = (in.h + 2 * s.pad_h - s.kernel_h) / s.stride_h + 1;
    const std::int64_t ow = (in.w + 2 * s.pad_w - s.kernel_w) / s.stride_w + 1;
    Tensor out(Shape{in.n, s.out_channels, oh, ow});
    const int icg = s.in_channels / s.groups;
    const int ocg = s.out_channels / s.groups;
    for (std::int64_t n = 0; n < in.n; ++n) {
        for (int oc = 0; oc < s.out_channels; ++oc) {
            const int g = oc / ocg;
            for (std::int64_t y = 0; y < oh; ++y) {
                for (std::int64_t xo = 0; xo < ow; ++xo) {
                    double acc = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(oc)];
                    for (int ic = 0; ic < icg; ++ic) {
                        for (int kh = 0; kh < s.kernel_h; ++kh) {
                            for (int kw = 0; kw < s.kernel_w; ++kw) {
                                const std::int64_t iy = y * s.stride_h - s.pad_h + kh;
                                const std::int64_t ix = xo * s.stride_w - s.pad_w + kw;
                                if (iy < 0 || iy >= in.h || ix < 0 || ix >= in.w) continue;
                                acc += static_cast<double>(x.at(n, g * icg + ic, iy, ix)) * kernel.at(oc, ic, kh, kw);
                            }
                        }
                    }
                    out.at(n, oc, y, xo) = static_cast<float>(acc);
                }
            }
        }
    }
    return out;
}

inline Tensor maxpool(const Tensor& x, int k, int stride, int pad) {
    const Shape in = x.shape();
    const std::int64_t oh = (in.h + 2 * pad - k) / stride + 1;
    const std::int64_t ow = (in.w + 2 * pad - k) / stride + 1;
    Tensor out(Shape{in.n, in.c, oh, ow});
    for (std::int64_t n = 0; n < in.n; ++n) {
        for (std::int64_t c = 0; c < in.c; ++c) {
            for (std::int64_t y = 0; y < oh; ++y) {
                for (std::int64_t xo = 0; xo < ow; ++xo) {
                    float best = -std::numeric_limits<float>::infinity();
                    for (int i = 0; i < k; ++i) {
                        for (int j = 0; j < k; ++j) {
                            const std::int64_t iy = y * stride - pad + i;
                            const std::int64_t ix = xo * stride - pad + j;
                            if (iy < 0 || iy >= in.h || ix < 0 || ix >= in.w) continue;
                            best = std::max(best, x.at(n, c, iy, ix));
                        }
                    }
                    out.at(n, c, y, xo) = best;
                }
            }
        }
    }
    return out;
}

// Largest |a - b| / max(1, |b|).
inline double max_rel_error(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return std::numeric_limits<double>::infinity();
    double worst = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        const double x = a.data()[static_cast<std::size_t>(i)];
        const double y = b.data()[static_cast<std::size_t>(i)];
        worst = std::max(worst, std::abs(x - y) / std::max(1.0, std::abs(y)));
    }
    return worst;
}

// Single precision in the same operation order as a plain implementation, so
// threshold comparisons agree bit for bit.
inline float box_iou(const DetBox& a, const DetBox& b) {
    const float iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const float ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    const float inter = iw > 0.0f && ih > 0.0f ? iw * ih : 0.0f;
    const float ua = std::max(0.0f, a.x2 - a.x1) * std::max(0.0f, a.y2 - a.y1);
    const float ub = std::max(0.0f, b.x2 - b.x1) * std::max(0.0f, b.y2 - b.y1);
    const float uni = ua + ub - inter;
    return uni > 0.0f ? inter / uni : 0.0f;
}

// Brute force: repeatedly take the best remaining box (lowest index on ties)
// and strike every remaining box overlapping it beyond the threshold.
inline std::vector<DetBox> nms(const std::vector<DetBox>& boxes, float threshold) {
    std::vector<bool> alive(boxes.size(), true);
    std::vector<DetBox> kept;
    for (;;) {
        std::size_t best = boxes.size();
        for (std::size_t i = 0; i < boxes.size(); ++i) {
            if (alive[i] && (best == boxes.size() || boxes[i].score > boxes[best].score)) best = i;
        }
        if (best == boxes.size()) break;
        alive[best] = false;
        kept.push_back(boxes[best]);
        for (std::size_t i = 0; i < boxes.size(); ++i) {
            if (alive[i] && box_iou(boxes[best], boxes[i]) > threshold) alive[i] = false;
        }
    }
    return kept;
}

inline std::vector<DetBox> random_boxes(std::size_t n, std::mt19937& rng, float extent = 200.0f) {
    std::uniform_real_distribution<float> pos(0.0f, extent);
    std::uniform_real_distribution<float> size(4.0f, extent / 4.0f);
    std::uniform_real_distribution<float> score(0.0f, 1.0f);
    std::vector<DetBox> out(n);
    for (auto& b : out) {
        b.x1 = pos(rng);
        b.y1 = pos(rng);
        b.x2 = b.x1 + size(rng);
        b.y2 = b.y1 + size(rng);
        b.score = score(rng);
    }
    return out;
}

}  // namespace oracle
