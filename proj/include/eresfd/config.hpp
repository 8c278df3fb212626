// SPDX-License-Identifier: Apache-2.0
//
// JSON model configuration. Schema (every key optional; unknown keys are
// rejected):
//
//   {
//     "preset": "eresfd" | "resnet18",          defaults the remaining fields
//     "input": {"channels": 3, "height": 480, "width": 640},
//     "backbone": {
//       "stem": "eresnet" | "resnet",
//       "width_multiplier": 1.0,
//       "base_width": 16,
//       "stage_blocks": [2, 3, 3, 3, 2, 1],
//       "stage_strides": [1, 2, 2, 2, 2, 2],
//       "channel_preserving": true
//     },
//     "neck": {"kind": "sepfpn" | "fpn" | "none", "separation_position": "P5", "fusion_epsilon": 1e-4},
//     "ccpm": true,
//     "heads": {"enabled": true, "maxout_background": 3}
//   }

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "eresfd/graph.hpp"

namespace eresfd {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ModelFile {
    ModelConfig model;
    std::int64_t input_height = 480;
    std::int64_t input_width = 640;

    Shape input_shape() const { return Shape{1, model.input_channels, input_height, input_width}; }
};

/// Throws ConfigError for malformed JSON, unknown keys, wrong types and
/// configurations that fail ModelConfig::validate().
ModelFile parse_model_config(std::string_view json_text);
ModelFile load_model_config(const std::filesystem::path& path);

/// Full (preset-free) JSON; parse_model_config(to_json(f)) reproduces f.
std::string to_json(const ModelFile& f);

}  // namespace eresfd
