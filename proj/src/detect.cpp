// SPDX-License-Identifier: Apache-2.0

#include "eresfd/detect.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "eresfd/image.hpp"

namespace eresfd {

AnchorSet generate_anchors(std::int64_t height, std::int64_t width) {
    if (height < kMinImageSide || width < kMinImageSide) {
        throw std::invalid_argument("generate_anchors: image " + std::to_string(height) + "x" + std::to_string(width) +
                                    " smaller than " + std::to_string(kMinImageSide) + " on a side");
    }
    AnchorSet set;
    for (std::size_t l = 0; l < kAnchorStrides.size(); ++l) {
        AnchorLevel level;
        level.stride = kAnchorStrides[l];
        level.size = kAnchorSizes[l];
        level.rows = (height + level.stride - 1) / level.stride;
        level.cols = (width + level.stride - 1) / level.stride;
        level.anchors.reserve(static_cast<std::size_t>(level.rows * level.cols));
        for (std::int64_t i = 0; i < level.rows; ++i) {
            for (std::int64_t j = 0; j < level.cols; ++j) {
                level.anchors.push_back(Anchor{(j + 0.5f) * level.stride, (i + 0.5f) * level.stride, level.size,
                                               level.size * kAnchorAspect});
            }
        }
        set.push_back(std::move(level));
    }
    return set;
}

DetBox decode_box(const Anchor& a, std::span<const float, 4> d, Variances v) {
    const float cx = a.cx + d[0] * v.center * a.w;
    const float cy = a.cy + d[1] * v.center * a.h;
    const float w = a.w * std::exp(d[2] * v.size);
    const float h = a.h * std::exp(d[3] * v.size);
    return DetBox{cx - 0.5f * w, cy - 0.5f * h, cx + 0.5f * w, cy + 0.5f * h, 0.0f};
}

std::array<float, 4> encode_box(const Anchor& a, const DetBox& b, Variances v) {
    const float w = b.x2 - b.x1;
    const float h = b.y2 - b.y1;
    const float cx = 0.5f * (b.x1 + b.x2);
    const float cy = 0.5f * (b.y1 + b.y2);
    return {(cx - a.cx) / (v.center * a.w), (cy - a.cy) / (v.center * a.h), std::log(w / a.w) / v.size,
            std::log(h / a.h) / v.size};
}

std::vector<DetBox> decode_boxes(const Tensor& deltas, const AnchorLevel& level, Variances v) {
    const Shape& s = deltas.shape();
    if (s.n != 1 || s.c != 4) throw std::invalid_argument("decode_boxes: deltas must be (1,4,h,w), got " + s.str());
    if (s.plane() != static_cast<std::int64_t>(level.anchors.size())) {
        throw std::invalid_argument("decode_boxes: " + std::to_string(s.plane()) + " cells for " +
                                    std::to_string(level.anchors.size()) + " anchors");
    }
    std::vector<DetBox> out;
    out.reserve(level.anchors.size());
    for (std::int64_t p = 0; p < s.plane(); ++p) {
        const float d[4] = {deltas.plane(0, 0)[p], deltas.plane(0, 1)[p], deltas.plane(0, 2)[p], deltas.plane(0, 3)[p]};
        out.push_back(decode_box(level.anchors[static_cast<std::size_t>(p)], std::span<const float, 4>(d), v));
    }
    return out;
}

float iou(const DetBox& a, const DetBox& b) {
    const float iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const float ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    const float inter = iw > 0.0f && ih > 0.0f ? iw * ih : 0.0f;
    const float uni = a.area() + b.area() - inter;
    return uni > 0.0f ? inter / uni : 0.0f;
}

namespace {

std::vector<std::size_t> score_order(std::span<const DetBox> boxes) {
    std::vector<std::size_t> order(boxes.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return boxes[a].score > boxes[b].score; });
    return order;
}

}  // namespace

std::vector<DetBox> nms(std::span<const DetBox> boxes, float iou_threshold) {
    const std::vector<std::size_t> order = score_order(boxes);
    std::vector<DetBox> kept;
    for (std::size_t idx : order) {
        const DetBox& cand = boxes[idx];
        bool suppressed = false;
        for (const DetBox& k : kept) {
            if (iou(k, cand) > iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(cand);
    }
    return kept;
}

std::vector<DetBox> box_voting(std::span<const DetBox> kept, std::span<const DetBox> all, float iou_threshold) {
    std::vector<DetBox> out;
    out.reserve(kept.size());
    for (const DetBox& k : kept) {
        double sx1 = 0, sy1 = 0, sx2 = 0, sy2 = 0, total = 0;
        for (const DetBox& b : all) {
            if (iou(k, b) < iou_threshold) continue;
            const double w = b.score;
            sx1 += w * b.x1;
            sy1 += w * b.y1;
            sx2 += w * b.x2;
            sy2 += w * b.y2;
            total += w;
        }
        DetBox voted = k;
        if (total > 0.0) {
            voted.x1 = static_cast<float>(sx1 / total);
            voted.y1 = static_cast<float>(sy1 / total);
            voted.x2 = static_cast<float>(sx2 / total);
            voted.y2 = static_cast<float>(sy2 / total);
        }
        out.push_back(voted);
    }
    return out;
}

std::vector<DetBox> clip_boxes(std::span<const DetBox> boxes, float width, float height) {
    std::vector<DetBox> out;
    out.reserve(boxes.size());
    for (DetBox b : boxes) {
        b.x1 = std::clamp(b.x1, 0.0f, width);
        b.x2 = std::clamp(b.x2, 0.0f, width);
        b.y1 = std::clamp(b.y1, 0.0f, height);
        b.y2 = std::clamp(b.y2, 0.0f, height);
        // Boxes lying entirely outside the frame collapse; drop them.
        if (b.x1 < b.x2 && b.y1 < b.y2) out.push_back(b);
    }
    return out;
}

std::vector<DetBox> merge_passes(std::span<const std::vector<DetBox>> passes, float width, float height,
                                 float iou_threshold) {
    std::vector<DetBox> all;
    for (const auto& p : passes) all.insert(all.end(), p.begin(), p.end());
    const std::vector<DetBox> kept = nms(all, iou_threshold);
    const std::vector<DetBox> voted = box_voting(kept, all, iou_threshold);
    return clip_boxes(voted, width, height);
}

std::vector<DetBox> candidates_from_heads(const std::map<std::string, Tensor>& outputs, const AnchorSet& anchors,
                                          const DetectConfig& cfg) {
    std::vector<DetBox> out;
    for (std::size_t l = 0; l < anchors.size(); ++l) {
        const std::string d = "D" + std::to_string(l + 1);
        auto reg_it = outputs.find(d + ".reg");
        auto cls_it = outputs.find(d + ".cls");
        if (reg_it == outputs.end() || cls_it == outputs.end()) {
            throw std::invalid_argument("detect: model has no " + d + " head outputs");
        }
        const Tensor& reg = reg_it->second;
        const Tensor& cls = cls_it->second;
        const AnchorLevel& level = anchors[l];
        if (cls.shape() != Shape{1, 2, level.rows, level.cols} || reg.shape() != Shape{1, 4, level.rows, level.cols}) {
            throw std::invalid_argument("detect: " + d + " maps " + reg.shape().str() + "/" + cls.shape().str() +
                                        " do not match a " + std::to_string(level.rows) + "x" +
                                        std::to_string(level.cols) + " anchor grid");
        }
        const float* face = cls.plane(0, 1);
        std::vector<std::int64_t> hits;
        for (std::int64_t p = 0; p < cls.shape().plane(); ++p) {
            if (face[p] >= cfg.score_threshold) hits.push_back(p);
        }
        std::stable_sort(hits.begin(), hits.end(), [&](std::int64_t a, std::int64_t b) { return face[a] > face[b]; });
        if (hits.size() > cfg.top_k_per_level) hits.resize(cfg.top_k_per_level);
        for (std::int64_t p : hits) {
            const float delta[4] = {reg.plane(0, 0)[p], reg.plane(0, 1)[p], reg.plane(0, 2)[p], reg.plane(0, 3)[p]};
            DetBox b = decode_box(level.anchors[static_cast<std::size_t>(p)], std::span<const float, 4>(delta),
                                  cfg.variances);
            b.score = face[p];
            out.push_back(b);
        }
    }
    return out;
}

std::vector<DetBox> detect(const Tensor& image, const Executor& model, const DetectConfig& cfg) {
    const Shape& s = image.shape();
    if (s.n != 1) throw std::invalid_argument("detect: expects a single image, got batch " + std::to_string(s.n));
    if (cfg.scales.empty()) throw std::invalid_argument("detect: at least one scale required");
    std::vector<std::vector<DetBox>> passes;
    for (float scale : cfg.scales) {
        if (!(scale > 0.0f)) throw std::invalid_argument("detect: scales must be positive");
        const std::int64_t h = std::max<std::int64_t>(1, std::lround(s.h * scale));
        const std::int64_t w = std::max<std::int64_t>(1, std::lround(s.w * scale));
        const Tensor scaled = resize_bilinear(image, h, w);
        const float sx = static_cast<float>(w) / static_cast<float>(s.w);
        const float sy = static_cast<float>(h) / static_cast<float>(s.h);
        for (int mirrored = 0; mirrored <= (cfg.flip ? 1 : 0); ++mirrored) {
            const Tensor view = mirrored ? flip_horizontal(scaled) : scaled;
            const Tensor padded = pad_to_min(view, kMinImageSide, kMinImageSide);
            const AnchorSet anchors = generate_anchors(padded.shape().h, padded.shape().w);
            std::vector<DetBox> boxes = candidates_from_heads(model.run(padded), anchors, cfg);
            for (DetBox& b : boxes) {
                if (mirrored) {
                    const float x1 = static_cast<float>(w) - b.x2;
                    const float x2 = static_cast<float>(w) - b.x1;
                    b.x1 = x1;
                    b.x2 = x2;
                }
                b.x1 /= sx;
                b.x2 /= sx;
                b.y1 /= sy;
                b.y2 /= sy;
            }
            passes.push_back(std::move(boxes));
        }
    }
    return merge_passes(passes, static_cast<float>(s.w), static_cast<float>(s.h), cfg.iou_threshold);
}

void write_detections(std::ostream& os, std::span<const DetBox> boxes) {
    char line[160];
    for (const DetBox& b : boxes) {
        std::snprintf(line, sizeof(line), "%.6f %.6f %.6f %.6f %.6f\n", b.x1, b.y1, b.x2, b.y2, b.score);
        os << line;
    }
}

void write_detections_json(std::ostream& os, std::span<const DetBox> boxes) {
    char item[200];
    os << '[';
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const DetBox& b = boxes[i];
        std::snprintf(item, sizeof(item), "%s{\"x1\":%.6f,\"y1\":%.6f,\"x2\":%.6f,\"y2\":%.6f,\"score\":%.6f}",
                      i ? "," : "", b.x1, b.y1, b.x2, b.y2, b.score);
        os << item;
    }
    os << "]\n";
}

}  // namespace eresfd
