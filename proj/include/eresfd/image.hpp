// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "eresfd/tensor.hpp"

namespace eresfd {

/// Per-channel means subtracted from B, G, R.
inline constexpr std::array<float, 3> kBgrMeans{104.0f, 117.0f, 123.0f};

struct RgbImage {
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::vector<std::uint8_t> pixels;  // interleaved RGB, row-major
};

RgbImage decode_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const RgbImage& img);
void write_ppm(const std::filesystem::path& path, const RgbImage& img);

/// (1, 3, H, W), channels B, G, R, means subtracted, no scaling.
Tensor preprocess(const RgbImage& img);

/// Binary PPM (P6) goes through preprocess(); a raw blob is returned as is.
/// Anything else throws std::runtime_error naming the leading bytes.
Tensor load_image(const std::filesystem::path& path);

/// Bilinear resize with half-pixel centers.
Tensor resize_bilinear(const Tensor& x, std::int64_t height, std::int64_t width);
Tensor flip_horizontal(const Tensor& x);
/// Zero-pads bottom/right so that h >= min_h and w >= min_w.
Tensor pad_to_min(const Tensor& x, std::int64_t min_h, std::int64_t min_w);

}  // namespace eresfd
