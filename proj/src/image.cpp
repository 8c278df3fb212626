// SPDX-License-Identifier: Apache-2.0

#include "eresfd/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

#include "eresfd/byte_io.hpp"

namespace eresfd {

namespace {

// PPM header tokens are whitespace separated; '#' starts a comment line.
std::int64_t read_header_int(std::span<const std::uint8_t> bytes, std::size_t& pos) {
    while (pos < bytes.size()) {
        if (std::isspace(bytes[pos])) {
            ++pos;
        } else if (bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else {
            break;
        }
    }
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw std::runtime_error("ppm: malformed header");
    std::int64_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
        v = v * 10 + (bytes[pos++] - '0');
        if (v > (1 << 24)) throw std::runtime_error("ppm: header value too large");
    }
    return v;
}

std::string printable_magic(std::span<const std::uint8_t> bytes) {
    std::ostringstream os;
    for (std::size_t i = 0; i < std::min<std::size_t>(4, bytes.size()); ++i) {
        const unsigned char ch = bytes[i];
        if (std::isprint(ch)) {
            os << static_cast<char>(ch);
        } else {
            os << "\\x" << std::hex << static_cast<int>(ch) << std::dec;
        }
    }
    return os.str();
}

}  // namespace

RgbImage decode_ppm(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
        throw std::runtime_error("ppm: expected magic 'P6', found '" + printable_magic(bytes) + "'");
    }
    std::size_t pos = 2;
    RgbImage img;
    img.width = read_header_int(bytes, pos);
    img.height = read_header_int(bytes, pos);
    const std::int64_t maxval = read_header_int(bytes, pos);
    if (maxval < 1 || maxval > 255) throw std::runtime_error("ppm: only 8-bit images are supported");
    if (img.width < 1 || img.height < 1) throw std::runtime_error("ppm: empty image");
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw std::runtime_error("ppm: malformed header");
    ++pos;
    const std::size_t need = static_cast<std::size_t>(img.width * img.height * 3);
    if (bytes.size() - pos < need) throw std::runtime_error("ppm: truncated pixel data");
    img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                      bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
    if (maxval != 255) {
        for (auto& p : img.pixels) p = static_cast<std::uint8_t>(std::lround(p * 255.0 / maxval));
    }
    return img;
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& img) {
    if (img.pixels.size() != static_cast<std::size_t>(img.width * img.height * 3)) {
        throw std::invalid_argument("ppm: pixel buffer does not match dimensions");
    }
    const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.pixels.begin(), img.pixels.end());
    return out;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& img) { byte_io::write_file(path, encode_ppm(img)); }

Tensor preprocess(const RgbImage& img) {
    Tensor t(Shape{1, 3, img.height, img.width});
    const std::int64_t plane = img.height * img.width;
    for (std::int64_t p = 0; p < plane; ++p) {
        const std::uint8_t* rgb = &img.pixels[static_cast<std::size_t>(p * 3)];
        // Output channel c reads RGB component 2 - c (B, G, R).
        for (int c = 0; c < 3; ++c) t.plane(0, c)[p] = static_cast<float>(rgb[2 - c]) - kBgrMeans[c];
    }
    return t;
}

Tensor load_image(const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = byte_io::read_file(path);
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return preprocess(decode_ppm(bytes));
    if (bytes.size() >= 16) {
        try {
            return decode_blob(bytes);
        } catch (const std::exception&) {
            // fall through to the format error below
        }
    }
    throw std::runtime_error("unsupported image format in '" + path.string() + "' (magic '" + printable_magic(bytes) +
                             "'); expected binary PPM (P6) or raw tensor blob");
}

Tensor resize_bilinear(const Tensor& x, std::int64_t height, std::int64_t width) {
    const Shape in = x.shape();
    if (height < 1 || width < 1) throw std::invalid_argument("resize_bilinear: target must be positive");
    if (height == in.h && width == in.w) return x;
    Tensor out(Shape{in.n, in.c, height, width});
    const double sy = static_cast<double>(in.h) / height;
    const double sx = static_cast<double>(in.w) / width;
    auto coord = [](double pos, std::int64_t limit, std::int64_t& i0, std::int64_t& i1, float& frac) {
        pos = std::max(pos, 0.0);
        i0 = std::min<std::int64_t>(static_cast<std::int64_t>(pos), limit - 1);
        i1 = std::min<std::int64_t>(i0 + 1, limit - 1);
        frac = static_cast<float>(pos - i0);
    };
    for (std::int64_t p = 0; p < in.n * in.c; ++p) {
        const float* src = x.data().data() + p * in.plane();
        float* dst = out.data().data() + p * height * width;
        for (std::int64_t oy = 0; oy < height; ++oy) {
            std::int64_t y0, y1;
            float fy;
            coord((oy + 0.5) * sy - 0.5, in.h, y0, y1, fy);
            for (std::int64_t ox = 0; ox < width; ++ox) {
                std::int64_t x0, x1;
                float fx;
                coord((ox + 0.5) * sx - 0.5, in.w, x0, x1, fx);
                const float top = src[y0 * in.w + x0] * (1 - fx) + src[y0 * in.w + x1] * fx;
                const float bottom = src[y1 * in.w + x0] * (1 - fx) + src[y1 * in.w + x1] * fx;
                dst[oy * width + ox] = top * (1 - fy) + bottom * fy;
            }
        }
    }
    return out;
}

Tensor flip_horizontal(const Tensor& x) {
    const Shape s = x.shape();
    Tensor out(s);
    for (std::int64_t p = 0; p < s.n * s.c; ++p) {
        for (std::int64_t r = 0; r < s.h; ++r) {
            const float* src = x.data().data() + p * s.plane() + r * s.w;
            float* dst = out.data().data() + p * s.plane() + r * s.w;
            std::reverse_copy(src, src + s.w, dst);
        }
    }
    return out;
}

Tensor pad_to_min(const Tensor& x, std::int64_t min_h, std::int64_t min_w) {
    const Shape s = x.shape();
    if (s.h >= min_h && s.w >= min_w) return x;
    const std::int64_t h = std::max(s.h, min_h);
    const std::int64_t w = std::max(s.w, min_w);
    Tensor out(Shape{s.n, s.c, h, w});
    for (std::int64_t p = 0; p < s.n * s.c; ++p) {
        for (std::int64_t r = 0; r < s.h; ++r) {
            std::copy_n(x.data().data() + p * s.plane() + r * s.w, s.w, out.data().data() + p * h * w + r * w);
        }
    }
    return out;
}

}  // namespace eresfd
