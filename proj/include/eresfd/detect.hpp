// SPDX-License-Identifier: Apache-2.0
//
// Anchors, box decoding and the post-processing that turns head maps into
// face boxes: threshold, decode, greedy NMS, box voting, multi-pass merging.

#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "eresfd/executor.hpp"
#include "eresfd/tensor.hpp"

namespace eresfd {

struct Anchor {
    float cx = 0.0f;
    float cy = 0.0f;
    float w = 0.0f;
    float h = 0.0f;
};

struct AnchorLevel {
    int stride = 0;
    float size = 0.0f;  // anchor width; height is size * kAnchorAspect
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    std::vector<Anchor> anchors;  // row-major over (rows, cols)
};

using AnchorSet = std::vector<AnchorLevel>;

inline constexpr std::array<int, 6> kAnchorStrides{4, 8, 16, 32, 64, 128};
inline constexpr std::array<float, 6> kAnchorSizes{16, 32, 64, 128, 256, 512};
inline constexpr float kAnchorAspect = 1.25f;  // height / width
inline constexpr std::int64_t kMinImageSide = 128;

/// One anchor per cell of every level; ceil(H / stride) x ceil(W / stride).
/// Throws std::invalid_argument if either side is below kMinImageSide.
AnchorSet generate_anchors(std::int64_t height, std::int64_t width);

struct DetBox {
    float x1 = 0.0f;
    float y1 = 0.0f;
    float x2 = 0.0f;
    float y2 = 0.0f;
    float score = 0.0f;

    float area() const { return std::max(0.0f, x2 - x1) * std::max(0.0f, y2 - y1); }
    bool operator==(const DetBox&) const = default;
};

struct Variances {
    float center = 0.1f;
    float size = 0.2f;
};

/// deltas: (1, 4, rows, cols). Scores are left at zero.
std::vector<DetBox> decode_boxes(const Tensor& deltas, const AnchorLevel& level, Variances v = {});

DetBox decode_box(const Anchor& a, std::span<const float, 4> d, Variances v = {});
/// Inverse of decode_box.
std::array<float, 4> encode_box(const Anchor& a, const DetBox& b, Variances v = {});

/// Intersection over union; 0 when the union is empty.
float iou(const DetBox& a, const DetBox& b);

/// Greedy NMS: score-descending, ties by lower input index; a box is dropped
/// when its IoU with an already kept box exceeds `iou_threshold`.
std::vector<DetBox> nms(std::span<const DetBox> boxes, float iou_threshold);

/// Replaces each kept box's coordinates by the score-weighted mean of every
/// box in `all` with IoU >= threshold against it. Scores are unchanged.
std::vector<DetBox> box_voting(std::span<const DetBox> kept, std::span<const DetBox> all, float iou_threshold = 0.3f);

std::vector<DetBox> clip_boxes(std::span<const DetBox> boxes, float width, float height);

/// Concatenate, NMS, vote against the union, then clip to the image.
std::vector<DetBox> merge_passes(std::span<const std::vector<DetBox>> passes, float width, float height,
                                 float iou_threshold = 0.3f);

struct DetectConfig {
    float score_threshold = 0.05f;
    std::size_t top_k_per_level = 5000;
    float iou_threshold = 0.3f;
    bool flip = false;
    std::vector<float> scales{1.0f};
    Variances variances;
};

/// Thresholded, decoded candidates from one set of head outputs. `outputs`
/// must hold D{k}.reg / D{k}.cls for every anchor level.
std::vector<DetBox> candidates_from_heads(const std::map<std::string, Tensor>& outputs, const AnchorSet& anchors,
                                          const DetectConfig& cfg);

/// image: (1, C, H, W) preprocessed tensor. Runs one pass per scale (and a
/// mirrored pass per scale with cfg.flip), maps boxes back to the original
/// frame and merges them. Images smaller than kMinImageSide are zero-padded
/// bottom/right before inference.
std::vector<DetBox> detect(const Tensor& image, const Executor& model, const DetectConfig& cfg);

/// One "x1 y1 x2 y2 score" line per box, six decimals.
void write_detections(std::ostream& os, std::span<const DetBox> boxes);
void write_detections_json(std::ostream& os, std::span<const DetBox> boxes);

}  // namespace eresfd
