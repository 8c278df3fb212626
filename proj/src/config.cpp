// SPDX-License-Identifier: Apache-2.0

#include "eresfd/config.hpp"

#include <initializer_list>
#include <json.hpp>

#include "eresfd/byte_io.hpp"

namespace eresfd {

namespace {

using nlohmann::json;

void check_keys(const json& obj, std::string_view where, std::initializer_list<std::string_view> allowed) {
    if (!obj.is_object()) throw ConfigError(std::string(where) + ": expected an object");
    for (const auto& [key, value] : obj.items()) {
        bool known = false;
        for (auto a : allowed) known = known || key == a;
        if (!known) throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
    }
}

template <typename T>
void read(const json& obj, const char* key, std::string_view where, T& out) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    try {
        out = it->get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string(where) + "." + key + ": wrong type (" + it->type_name() + ")");
    }
}

int parse_separation(const json& v) {
    if (v.is_number_integer()) return v.get<int>();
    if (v.is_string()) {
        const std::string s = v.get<std::string>();
        if (s.size() >= 2 && (s[0] == 'P' || s[0] == 'p')) {
            try {
                std::size_t used = 0;
                const int level = std::stoi(s.substr(1), &used);
                if (used == s.size() - 1) return level;
            } catch (const std::exception&) {
            }
        }
    }
    throw ConfigError("neck.separation_position: expected \"P<k>\" or an integer, got " + v.dump());
}

StemKind parse_stem(const std::string& s) {
    if (s == "eresnet") return StemKind::kEResNet;
    if (s == "resnet") return StemKind::kResNet;
    throw ConfigError("backbone.stem: unknown stem '" + s + "' (eresnet, resnet)");
}

NeckKind parse_neck(const std::string& s) {
    if (s == "sepfpn") return NeckKind::kSepFpn;
    if (s == "fpn") return NeckKind::kFpn;
    if (s == "none") return NeckKind::kNone;
    throw ConfigError("neck.kind: unknown neck '" + s + "' (sepfpn, fpn, none)");
}

}  // namespace

ModelFile parse_model_config(std::string_view json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("malformed JSON: ") + e.what());
    }
    check_keys(root, "config", {"preset", "input", "backbone", "neck", "ccpm", "heads"});

    ModelFile f;
    std::string preset = "eresfd";
    read(root, "preset", "config", preset);
    if (preset == "eresfd") {
        f.model = ModelConfig::eresfd();
    } else if (preset == "resnet18") {
        f.model = ModelConfig::resnet18();
    } else {
        throw ConfigError("config.preset: unknown preset '" + preset + "' (eresfd, resnet18)");
    }
    ModelConfig& m = f.model;

    if (auto it = root.find("input"); it != root.end()) {
        check_keys(*it, "input", {"channels", "height", "width"});
        read(*it, "channels", "input", m.input_channels);
        read(*it, "height", "input", f.input_height);
        read(*it, "width", "input", f.input_width);
        if (f.input_height < 1 || f.input_width < 1) throw ConfigError("input: height and width must be positive");
    }
    if (auto it = root.find("backbone"); it != root.end()) {
        const json& b = *it;
        check_keys(b, "backbone",
                   {"stem", "width_multiplier", "base_width", "stage_blocks", "stage_strides", "channel_preserving"});
        if (auto s = b.find("stem"); s != b.end()) {
            if (!s->is_string()) throw ConfigError("backbone.stem: wrong type");
            m.backbone.stem = parse_stem(s->get<std::string>());
        }
        read(b, "width_multiplier", "backbone", m.backbone.width_multiplier);
        read(b, "base_width", "backbone", m.backbone.base_width);
        read(b, "stage_blocks", "backbone", m.backbone.stage_blocks);
        read(b, "stage_strides", "backbone", m.backbone.stage_strides);
        read(b, "channel_preserving", "backbone", m.backbone.channel_preserving);
    }
    if (auto it = root.find("neck"); it != root.end()) {
        const json& n = *it;
        check_keys(n, "neck", {"kind", "separation_position", "fusion_epsilon"});
        if (auto k = n.find("kind"); k != n.end()) {
            if (!k->is_string()) throw ConfigError("neck.kind: wrong type");
            m.neck.kind = parse_neck(k->get<std::string>());
        }
        if (auto s = n.find("separation_position"); s != n.end()) m.neck.separation_level = parse_separation(*s);
        read(n, "fusion_epsilon", "neck", m.neck.fusion_epsilon);
    }
    read(root, "ccpm", "config", m.ccpm);
    if (auto it = root.find("heads"); it != root.end()) {
        check_keys(*it, "heads", {"enabled", "maxout_background"});
        read(*it, "enabled", "heads", m.heads.enabled);
        read(*it, "maxout_background", "heads", m.heads.maxout_background);
    }
    try {
        m.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    return f;
}

ModelFile load_model_config(const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = byte_io::read_file(path);
    try {
        return parse_model_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::string to_json(const ModelFile& f) {
    const ModelConfig& m = f.model;
    const char* neck = m.neck.kind == NeckKind::kSepFpn ? "sepfpn" : m.neck.kind == NeckKind::kFpn ? "fpn" : "none";
    json root = {
        {"input", {{"channels", m.input_channels}, {"height", f.input_height}, {"width", f.input_width}}},
        {"backbone",
         {{"stem", m.backbone.stem == StemKind::kEResNet ? "eresnet" : "resnet"},
          {"width_multiplier", m.backbone.width_multiplier},
          {"base_width", m.backbone.base_width},
          {"stage_blocks", m.backbone.stage_blocks},
          {"stage_strides", m.backbone.stage_strides},
          {"channel_preserving", m.backbone.channel_preserving}}},
        {"neck",
         {{"kind", neck},
          {"separation_position", "P" + std::to_string(m.neck.separation_level)},
          {"fusion_epsilon", m.neck.fusion_epsilon}}},
        {"ccpm", m.ccpm},
        {"heads", {{"enabled", m.heads.enabled}, {"maxout_background", m.heads.maxout_background}}},
    };
    return root.dump(2) + "\n";
}

}  // namespace eresfd
