// SPDX-License-Identifier: Apache-2.0

#include "eresfd/weights.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "eresfd/byte_io.hpp"

namespace eresfd {

namespace {

constexpr char kMagic[4] = {'E', 'R', 'F', 'D'};
constexpr char kChecksumMagic[4] = {'C', 'K', 'S', 'M'};

std::int64_t product(const std::vector<std::int64_t>& dims) {
    std::int64_t total = 1;
    for (std::int64_t d : dims) {
        if (d < 0) throw std::invalid_argument("negative tensor dimension");
        if (__builtin_mul_overflow(total, d, &total)) throw std::overflow_error("tensor element count overflows");
    }
    return total;
}

std::string dims_str(const std::vector<std::int64_t>& dims) {
    std::string s = "(";
    for (std::size_t i = 0; i < dims.size(); ++i) s += (i ? "," : "") + std::to_string(dims[i]);
    return s + ")";
}

}  // namespace

std::int64_t WeightTensor::numel() const { return product(dims); }

void WeightStore::add(std::string name, WeightTensor tensor) {
    if (index_.contains(name)) throw std::invalid_argument("weight store: duplicate name '" + name + "'");
    if (tensor.dims.size() > 4) throw std::invalid_argument("weight store: '" + name + "' has rank > 4");
    if (tensor.numel() != static_cast<std::int64_t>(tensor.values.size())) {
        throw std::invalid_argument("weight store: '" + name + "' dims " + dims_str(tensor.dims) + " but " +
                                    std::to_string(tensor.values.size()) + " values");
    }
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(tensor));
}

void WeightStore::set(const std::string& name, WeightTensor tensor) {
    auto it = index_.find(name);
    if (it == index_.end()) {
        add(name, std::move(tensor));
        return;
    }
    if (tensor.numel() != static_cast<std::int64_t>(tensor.values.size())) {
        throw std::invalid_argument("weight store: '" + name + "' size mismatch");
    }
    entries_[it->second].second = std::move(tensor);
}

const WeightTensor* WeightStore::find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : &entries_[it->second].second;
}

const WeightTensor& WeightStore::at(std::string_view name) const {
    const WeightTensor* t = find(name);
    if (!t) throw std::out_of_range("missing weight '" + std::string(name) + "'");
    return *t;
}

std::uint32_t payload_crc32(const WeightTensor& t) {
    byte_io::Writer w;
    for (float v : t.values) w.f32(v);
    const auto& buf = w.buffer();
    return static_cast<std::uint32_t>(crc32(0L, buf.data(), static_cast<uInt>(buf.size())));
}

std::vector<std::uint8_t> encode_weights(const WeightStore& store, bool with_checksums) {
    byte_io::Writer out;
    out.str(std::string_view(kMagic, 4));
    out.u32(kWeightFormatVersion);
    out.u32(static_cast<std::uint32_t>(store.size()));
    for (const auto& [name, t] : store.entries()) {
        if (name.size() > UINT16_MAX) {
            throw WeightFormatError(WeightFormatErrorCode::kLengthMismatch, "weight name too long: " + name);
        }
        if (t.numel() != static_cast<std::int64_t>(t.values.size())) {
            throw WeightFormatError(WeightFormatErrorCode::kLengthMismatch, "tensor '" + name + "' payload length");
        }
        out.u16(static_cast<std::uint16_t>(name.size()));
        out.str(name);
        out.u8(static_cast<std::uint8_t>(t.dims.size()));
        for (std::int64_t d : t.dims) out.u32(static_cast<std::uint32_t>(d));
        for (float v : t.values) out.f32(v);
    }
    if (with_checksums) {
        out.str(std::string_view(kChecksumMagic, 4));
        out.u32(static_cast<std::uint32_t>(store.size()));
        for (const auto& entry : store.entries()) out.u32(payload_crc32(entry.second));
    }
    return std::move(out.buffer());
}

LoadedWeights decode_weights(std::span<const std::uint8_t> bytes) {
    byte_io::Reader in(bytes);
    LoadedWeights loaded;
    try {
        auto magic = in.bytes(4);
        if (std::memcmp(magic.data(), kMagic, 4) != 0) {
            throw WeightFormatError(WeightFormatErrorCode::kBadMagic,
                                    "bad magic '" + std::string(magic.begin(), magic.end()) + "', expected 'ERFD'");
        }
        const std::uint32_t version = in.u32();
        if (version != kWeightFormatVersion) {
            throw WeightFormatError(WeightFormatErrorCode::kUnsupportedVersion,
                                    "unsupported container version " + std::to_string(version));
        }
        const std::uint32_t count = in.u32();
        for (std::uint32_t i = 0; i < count; ++i) {
            const std::uint16_t name_len = in.u16();
            auto name_bytes = in.bytes(name_len);
            std::string name(name_bytes.begin(), name_bytes.end());
            const std::uint8_t rank = in.u8();
            if (rank > 4) {
                throw WeightFormatError(WeightFormatErrorCode::kBadRank,
                                        "tensor '" + name + "' has rank " + std::to_string(rank) + " > 4");
            }
            WeightTensor t;
            for (std::uint8_t r = 0; r < rank; ++r) t.dims.push_back(in.u32());
            const std::int64_t count_values = t.numel();
            if (static_cast<std::uint64_t>(count_values) * 4 > in.remaining()) {
                throw WeightFormatError(WeightFormatErrorCode::kTruncated,
                                        "tensor '" + name + "' payload of " + std::to_string(count_values * 4) +
                                            " bytes exceeds remaining " + std::to_string(in.remaining()));
            }
            t.values.resize(static_cast<std::size_t>(count_values));
            for (float& v : t.values) v = in.f32();
            if (loaded.store.contains(name)) {
                throw WeightFormatError(WeightFormatErrorCode::kDuplicateName, "duplicate tensor name '" + name + "'");
            }
            loaded.store.add(std::move(name), std::move(t));
        }
        if (in.remaining() > 0) {
            auto tag = in.bytes(std::min<std::size_t>(4, in.remaining()));
            if (tag.size() < 4 || std::memcmp(tag.data(), kChecksumMagic, 4) != 0) {
                throw WeightFormatError(WeightFormatErrorCode::kTrailingBytes,
                                        "unexpected trailing bytes after " + std::to_string(count) + " tensors");
            }
            const std::uint32_t n = in.u32();
            if (n != count) {
                throw WeightFormatError(WeightFormatErrorCode::kLengthMismatch,
                                        "checksum section lists " + std::to_string(n) + " entries for " +
                                            std::to_string(count) + " tensors");
            }
            std::vector<std::uint32_t> sums(n);
            for (auto& s : sums) s = in.u32();
            loaded.checksums = std::move(sums);
            if (in.remaining() > 0) {
                throw WeightFormatError(WeightFormatErrorCode::kTrailingBytes, "unexpected bytes after checksum section");
            }
        }
    } catch (const byte_io::TruncatedInput& e) {
        throw WeightFormatError(WeightFormatErrorCode::kTruncated, std::string("truncated weight container: ") + e.what());
    }
    return loaded;
}

void save_weights(const WeightStore& store, const std::filesystem::path& path, bool with_checksums) {
    byte_io::write_file(path, encode_weights(store, with_checksums));
}

WeightStore load_weights(const std::filesystem::path& path) { return decode_weights(byte_io::read_file(path)).store; }

LoadedWeights load_weights_with_checksums(const std::filesystem::path& path) {
    return decode_weights(byte_io::read_file(path));
}

std::vector<std::string> audit_checksums(const LoadedWeights& loaded) {
    std::vector<std::string> bad;
    if (!loaded.checksums) return bad;
    const auto& entries = loaded.store.entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (payload_crc32(entries[i].second) != (*loaded.checksums)[i]) bad.push_back(entries[i].first);
    }
    return bad;
}

std::vector<WeightRequirement> weight_manifest(const ModelGraph& g) {
    std::vector<WeightRequirement> out;
    for (const auto& node : g.nodes()) {
        if (node.is_weighted()) {
            const ConvSpec& s = node.conv();
            const Shape ws = s.weight_shape();
            out.push_back({node.weight_names.at(0), {ws.n, ws.c, ws.h, ws.w}});
            if (s.has_bias) out.push_back({node.weight_names.at(1), {s.out_channels}});
        } else {
            for (const auto& name : node.weight_names) out.push_back({name, {1}});
        }
    }
    return out;
}

WeightStore make_random_weights(const ModelGraph& g, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    WeightStore store;
    for (const auto& node : g.nodes()) {
        if (node.is_weighted()) {
            const ConvSpec& s = node.conv();
            const Shape ws = s.weight_shape();
            const double fan_in = static_cast<double>(ws.c) * ws.h * ws.w;
            std::normal_distribution<float> normal(0.0f, static_cast<float>(std::sqrt(2.0 / fan_in)));
            WeightTensor k{{ws.n, ws.c, ws.h, ws.w}, std::vector<float>(static_cast<std::size_t>(ws.numel()))};
            for (float& v : k.values) v = normal(rng);
            store.add(node.weight_names.at(0), std::move(k));
            if (s.has_bias) {
                std::uniform_real_distribution<float> uniform(-0.1f, 0.1f);
                WeightTensor b{{s.out_channels}, std::vector<float>(static_cast<std::size_t>(s.out_channels))};
                for (float& v : b.values) v = uniform(rng);
                store.add(node.weight_names.at(1), std::move(b));
            }
        } else {
            for (const auto& name : node.weight_names) store.add(name, WeightTensor{{1}, {1.0f}});
        }
    }
    return store;
}

ConvWeights conv_weights_from_store(const WeightStore& store, const LayerNode& node) {
    const ConvSpec& spec = node.conv();
    const WeightTensor* k = store.find(node.weight_names.at(0));
    if (!k) throw std::out_of_range("missing weight '" + node.weight_names.at(0) + "'");
    const Shape ws = spec.weight_shape();
    const std::vector<std::int64_t> expected{ws.n, ws.c, ws.h, ws.w};
    if (k->dims != expected) {
        throw std::invalid_argument("weight '" + node.weight_names[0] + "' has dims " + dims_str(k->dims) +
                                    ", expected " + dims_str(expected));
    }
    ConvWeights w{Tensor(ws, k->values), {}};
    if (spec.has_bias) {
        const WeightTensor* b = store.find(node.weight_names.at(1));
        if (!b) throw std::out_of_range("missing weight '" + node.weight_names.at(1) + "'");
        if (b->values.size() != static_cast<std::size_t>(spec.out_channels)) {
            throw std::invalid_argument("weight '" + node.weight_names[1] + "' has " + std::to_string(b->values.size()) +
                                        " entries, expected " + std::to_string(spec.out_channels));
        }
        w.bias = b->values;
    }
    return w;
}

}  // namespace eresfd
