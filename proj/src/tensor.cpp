// SPDX-License-Identifier: Apache-2.0

#include "eresfd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

#include "eresfd/byte_io.hpp"

namespace eresfd {

std::int64_t Shape::numel() const {
    if (n < 0 || c < 0 || h < 0 || w < 0) {
        throw std::invalid_argument("negative dimension in shape " + str());
    }
    std::int64_t total = 1;
    for (std::int64_t d : {n, c, h, w}) {
        if (__builtin_mul_overflow(total, d, &total)) {
            throw std::overflow_error("element count of shape " + str() + " overflows int64");
        }
    }
    return total;
}

std::string Shape::str() const {
    std::ostringstream os;
    os << '(' << n << ',' << c << ',' << h << ',' << w << ')';
    return os.str();
}

Tensor::Tensor(Shape shape, float fill) : shape_(shape), data_(static_cast<std::size_t>(shape.numel()), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(shape), data_(std::move(values)) {
    if (static_cast<std::int64_t>(data_.size()) != shape_.numel()) {
        throw std::invalid_argument("tensor of shape " + shape_.str() + " needs " + std::to_string(shape_.numel()) +
                                    " values, got " + std::to_string(data_.size()));
    }
}

Tensor elementwise_add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument("elementwise_add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    }
    Tensor out(a.shape());
    auto pa = a.data();
    auto pb = b.data();
    auto po = out.data();
    for (std::size_t i = 0; i < po.size(); ++i) po[i] = pa[i] + pb[i];
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out(x.shape());
    auto px = x.data();
    auto po = out.data();
    for (std::size_t i = 0; i < po.size(); ++i) po[i] = std::max(px[i], 0.0f);
    return out;
}

Tensor softmax_channels(const Tensor& x, std::int64_t group) {
    const Shape& s = x.shape();
    if (group <= 0 || s.c % group != 0) {
        throw std::invalid_argument("softmax_channels: channel count " + std::to_string(s.c) +
                                    " not divisible by group " + std::to_string(group));
    }
    Tensor out(s);
    const std::int64_t plane = s.plane();
    std::vector<float> scratch(static_cast<std::size_t>(group));
    for (std::int64_t n = 0; n < s.n; ++n) {
        for (std::int64_t g = 0; g < s.c; g += group) {
            for (std::int64_t p = 0; p < plane; ++p) {
                float peak = -INFINITY;
                for (std::int64_t k = 0; k < group; ++k) peak = std::max(peak, x.plane(n, g + k)[p]);
                float sum = 0.0f;
                for (std::int64_t k = 0; k < group; ++k) {
                    scratch[k] = std::exp(x.plane(n, g + k)[p] - peak);
                    sum += scratch[k];
                }
                for (std::int64_t k = 0; k < group; ++k) out.plane(n, g + k)[p] = scratch[k] / sum;
            }
        }
    }
    return out;
}

Tensor concat_channels(std::span<const Tensor> xs) {
    if (xs.empty()) throw std::invalid_argument("concat_channels: no inputs");
    const Shape& first = xs.front().shape();
    Shape out_shape = first;
    out_shape.c = 0;
    for (const Tensor& t : xs) {
        const Shape& s = t.shape();
        if (s.n != first.n || s.h != first.h || s.w != first.w) {
            throw std::invalid_argument("concat_channels: spatial mismatch " + first.str() + " vs " + s.str());
        }
        out_shape.c += s.c;
    }
    Tensor out(out_shape);
    for (std::int64_t n = 0; n < out_shape.n; ++n) {
        float* dst = out.plane(n, 0);
        for (const Tensor& t : xs) {
            const float* src = t.plane(n, 0);
            dst = std::copy_n(src, t.shape().c * t.shape().plane(), dst);
        }
    }
    return out;
}

Tensor slice_channels(const Tensor& x, std::int64_t begin, std::int64_t count) {
    const Shape& s = x.shape();
    if (begin < 0 || count < 0 || begin + count > s.c) {
        throw std::out_of_range("slice_channels: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                                ") outside " + std::to_string(s.c) + " channels");
    }
    Tensor out(Shape{s.n, count, s.h, s.w});
    for (std::int64_t n = 0; n < s.n; ++n) {
        std::copy_n(x.plane(n, begin), count * s.plane(), out.plane(n, 0));
    }
    return out;
}

std::vector<std::uint8_t> encode_blob(const Tensor& t) {
    byte_io::Writer out;
    const Shape& s = t.shape();
    for (std::int64_t d : {s.n, s.c, s.h, s.w}) {
        if (d > UINT32_MAX) throw std::invalid_argument("encode_blob: dimension exceeds u32");
        out.u32(static_cast<std::uint32_t>(d));
    }
    for (float v : t.data()) out.f32(v);
    return std::move(out.buffer());
}

Tensor decode_blob(std::span<const std::uint8_t> bytes) {
    byte_io::Reader in(bytes);
    Shape s;
    s.n = in.u32();
    s.c = in.u32();
    s.h = in.u32();
    s.w = in.u32();
    const std::int64_t count = s.numel();
    if (static_cast<std::uint64_t>(in.remaining()) != static_cast<std::uint64_t>(count) * 4) {
        throw std::runtime_error("blob of shape " + s.str() + " expects " + std::to_string(count * 4) +
                                 " payload bytes, found " + std::to_string(in.remaining()));
    }
    std::vector<float> values(static_cast<std::size_t>(count));
    for (float& v : values) v = in.f32();
    return Tensor(s, std::move(values));
}

void write_blob(const std::filesystem::path& path, const Tensor& t) { byte_io::write_file(path, encode_blob(t)); }

Tensor read_blob(const std::filesystem::path& path) { return decode_blob(byte_io::read_file(path)); }

namespace byte_io {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("cannot open '" + path.string() + "' for reading");
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FileError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FileError("short write to '" + path.string() + "'");
}

}  // namespace byte_io

}  // namespace eresfd
