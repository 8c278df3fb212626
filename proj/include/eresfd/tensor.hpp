// SPDX-License-Identifier: Apache-2.0
//
// Dense NCHW float tensor and the handful of elementwise primitives shared by
// the kernels, graph executor and post-processing.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace eresfd {

struct Shape {
    std::int64_t n = 0;
    std::int64_t c = 0;
    std::int64_t h = 0;
    std::int64_t w = 0;

    /// Element count; throws std::overflow_error if it does not fit int64.
    std::int64_t numel() const;
    std::int64_t plane() const { return h * w; }

    bool operator==(const Shape&) const = default;
    std::string str() const;
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> values);

    const Shape& shape() const { return shape_; }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }

    std::span<const float> data() const { return data_; }
    std::span<float> data() { return data_; }

    float& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
        return data_[static_cast<std::size_t>(((n * shape_.c + c) * shape_.h + h) * shape_.w + w)];
    }
    float at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return data_[static_cast<std::size_t>(((n * shape_.c + c) * shape_.h + h) * shape_.w + w)];
    }

    /// Pointer to the first element of plane (n, c).
    float* plane(std::int64_t n, std::int64_t c) { return data_.data() + (n * shape_.c + c) * shape_.plane(); }
    const float* plane(std::int64_t n, std::int64_t c) const {
        return data_.data() + (n * shape_.c + c) * shape_.plane();
    }

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_;
    std::vector<float> data_;
};

Tensor elementwise_add(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& x);

/// Softmax over consecutive blocks of `group` channels at every spatial
/// location. Max-subtracted, so large logits do not overflow.
Tensor softmax_channels(const Tensor& x, std::int64_t group);

Tensor concat_channels(std::span<const Tensor> xs);
Tensor slice_channels(const Tensor& x, std::int64_t begin, std::int64_t count);

// Raw blob: four little-endian u32 dims (n, c, h, w) then n*c*h*w
// little-endian f32 values.
std::vector<std::uint8_t> encode_blob(const Tensor& t);
Tensor decode_blob(std::span<const std::uint8_t> bytes);
void write_blob(const std::filesystem::path& path, const Tensor& t);
Tensor read_blob(const std::filesystem::path& path);

}  // namespace eresfd
