// SPDX-License-Identifier: Apache-2.0
//
// Named weight tensors and the "ERFD" container file.
//
// Layout (all little-endian):
//   magic "ERFD" | version u32 | tensor count u32
//   per tensor: name length u16 | name bytes | rank u8 | rank x u32 dims | f32 payload
//   optional checksum section: "CKSM" | count u32 | count x u32 CRC-32 of each payload
// Nothing else may follow.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "eresfd/graph.hpp"
#include "eresfd/kernels.hpp"

namespace eresfd {

struct WeightTensor {
    std::vector<std::int64_t> dims;  // rank 0..4
    std::vector<float> values;

    std::int64_t numel() const;
    bool operator==(const WeightTensor&) const = default;
};

/// Insertion-ordered name -> tensor map.
class WeightStore {
public:
    /// Throws std::invalid_argument on duplicate names or inconsistent sizes.
    void add(std::string name, WeightTensor tensor);
    void set(const std::string& name, WeightTensor tensor);

    const WeightTensor* find(std::string_view name) const;
    const WeightTensor& at(std::string_view name) const;
    bool contains(std::string_view name) const { return find(name) != nullptr; }

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::vector<std::pair<std::string, WeightTensor>>& entries() const { return entries_; }

    bool operator==(const WeightStore& other) const { return entries_ == other.entries_; }

private:
    std::vector<std::pair<std::string, WeightTensor>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

enum class WeightFormatErrorCode {
    kBadMagic,
    kUnsupportedVersion,
    kTruncated,
    kDuplicateName,
    kLengthMismatch,
    kBadRank,
    kTrailingBytes,
};

struct WeightFormatError : std::runtime_error {
    WeightFormatError(WeightFormatErrorCode code, const std::string& what) : std::runtime_error(what), code(code) {}
    WeightFormatErrorCode code;
};

inline constexpr std::uint32_t kWeightFormatVersion = 1;

struct LoadedWeights {
    WeightStore store;
    /// CRC-32 per tensor in store order, when the file carries a checksum section.
    std::optional<std::vector<std::uint32_t>> checksums;
};

std::vector<std::uint8_t> encode_weights(const WeightStore& store, bool with_checksums = false);
LoadedWeights decode_weights(std::span<const std::uint8_t> bytes);

void save_weights(const WeightStore& store, const std::filesystem::path& path, bool with_checksums = false);
WeightStore load_weights(const std::filesystem::path& path);
LoadedWeights load_weights_with_checksums(const std::filesystem::path& path);

std::uint32_t payload_crc32(const WeightTensor& t);

/// Names of tensors whose payload no longer matches the stored checksum.
std::vector<std::string> audit_checksums(const LoadedWeights& loaded);

// ---- graph <-> store ----------------------------------------------------

struct WeightRequirement {
    std::string name;
    std::vector<std::int64_t> dims;
};

/// Every tensor a graph reads, in node order: conv kernels (O, I/g, kh, kw),
/// conv biases (O), fusion scalars (1).
std::vector<WeightRequirement> weight_manifest(const ModelGraph& g);

/// He-normal kernels, small uniform biases, unit fusion weights; fully
/// determined by `seed`.
WeightStore make_random_weights(const ModelGraph& g, std::uint64_t seed);

/// Resolves "<id>.weight" / "<id>.bias" into ConvWeights checked against spec.
ConvWeights conv_weights_from_store(const WeightStore& store, const LayerNode& node);

}  // namespace eresfd
