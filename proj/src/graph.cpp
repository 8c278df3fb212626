// SPDX-License-Identifier: Apache-2.0

#include "eresfd/graph.hpp"

#include <cmath>
#include <stdexcept>

namespace eresfd {

std::string_view to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::kConv: return "conv";
        case LayerKind::kDepthwiseConv: return "depthwise-conv";
        case LayerKind::kRelu: return "relu";
        case LayerKind::kMaxPool: return "maxpool";
        case LayerKind::kUpsample: return "upsample";
        case LayerKind::kAdd: return "add";
        case LayerKind::kWeightedFusion: return "weighted-fusion";
        case LayerKind::kConcat: return "concat";
        case LayerKind::kSoftmax: return "softmax";
        case LayerKind::kMaxOut: return "maxout";
    }
    return "unknown";
}

const std::string& ModelGraph::add(LayerNode node) {
    if (node.id.empty() || node.id == kInput) throw GraphError("invalid node id '" + node.id + "'");
    if (index_.contains(node.id)) throw GraphError("duplicate node id '" + node.id + "'");
    if (node.inputs.empty()) throw GraphError("node '" + node.id + "' has no inputs");
    for (const auto& in : node.inputs) {
        if (in != kInput && !index_.contains(in)) {
            throw GraphError("node '" + node.id + "' reads '" + in + "' which is not an earlier node");
        }
    }
    if (node.is_weighted()) {
        const ConvSpec* spec = std::get_if<ConvSpec>(&node.spec);
        if (!spec) throw GraphError("conv node '" + node.id + "' lacks a ConvSpec");
        try {
            spec->validate();
        } catch (const std::exception& e) {
            throw GraphError("node '" + node.id + "': " + e.what());
        }
        if (node.kind == LayerKind::kDepthwiseConv && !spec->is_depthwise()) {
            throw GraphError("node '" + node.id + "' is depthwise but groups != channels");
        }
    }
    index_.emplace(node.id, nodes_.size());
    nodes_.push_back(std::move(node));
    return nodes_.back().id;
}

void ModelGraph::set_output(std::string name, std::string node_id) {
    if (node_id != kInput && !index_.contains(node_id)) {
        throw GraphError("output '" + name + "' refers to unknown node '" + node_id + "'");
    }
    for (auto& [n, id] : outputs_) {
        if (n == name) {
            id = std::move(node_id);
            return;
        }
    }
    outputs_.emplace_back(std::move(name), std::move(node_id));
}

const LayerNode* ModelGraph::find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    return it == index_.end() ? nullptr : &nodes_[it->second];
}

const LayerNode& ModelGraph::node(std::string_view id) const {
    const LayerNode* n = find(id);
    if (!n) throw GraphError("unknown node '" + std::string(id) + "'");
    return *n;
}

std::size_t ModelGraph::index_of(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) throw GraphError("unknown node '" + std::string(id) + "'");
    return it->second;
}

std::optional<std::string> ModelGraph::output(std::string_view name) const {
    for (const auto& [n, id] : outputs_) {
        if (n == name) return id;
    }
    return std::nullopt;
}

// ---- configs ----------------------------------------------------------------

int BackboneConfig::base_channels() const {
    return std::max(1, static_cast<int>(std::lround(base_width * width_multiplier)));
}

std::vector<int> BackboneConfig::stage_channels() const {
    std::vector<int> out;
    int channels = base_channels();
    for (std::size_t s = 0; s < stage_blocks.size(); ++s) {
        if (!channel_preserving && s > 0) channels *= 2;
        out.push_back(channels);
    }
    return out;
}

void BackboneConfig::validate() const {
    if (!(width_multiplier > 0.0) || !std::isfinite(width_multiplier)) {
        throw std::invalid_argument("backbone: width_multiplier must be positive");
    }
    if (base_width < 1) throw std::invalid_argument("backbone: base_width must be positive");
    if (stage_blocks.empty() || stage_blocks.size() > 6) {
        throw std::invalid_argument("backbone: between 1 and 6 stages required");
    }
    if (stage_strides.size() != stage_blocks.size()) {
        throw std::invalid_argument("backbone: stage_strides and stage_blocks differ in length");
    }
    for (std::size_t s = 0; s < stage_blocks.size(); ++s) {
        if (stage_blocks[s] < 1) throw std::invalid_argument("backbone: every stage needs at least one block");
        if (stage_strides[s] != 1 && stage_strides[s] != 2) {
            throw std::invalid_argument("backbone: stage strides must be 1 or 2");
        }
    }
}

ModelConfig ModelConfig::eresfd(double width_multiplier) {
    ModelConfig cfg;
    cfg.backbone.width_multiplier = width_multiplier;
    return cfg;
}

ModelConfig ModelConfig::resnet18(double width_multiplier) {
    ModelConfig cfg;
    cfg.backbone.stem = StemKind::kResNet;
    cfg.backbone.width_multiplier = width_multiplier;
    cfg.backbone.base_width = 64;
    cfg.backbone.stage_blocks = {2, 2, 2, 2};
    cfg.backbone.stage_strides = {1, 2, 2, 2};
    cfg.backbone.channel_preserving = false;
    cfg.neck.kind = NeckKind::kNone;
    cfg.ccpm = false;
    cfg.heads.enabled = false;
    return cfg;
}

void ModelConfig::validate() const {
    if (input_channels < 1) throw std::invalid_argument("model: input_channels must be positive");
    backbone.validate();
    const int levels = static_cast<int>(backbone.stage_blocks.size());
    if (neck.kind != NeckKind::kNone) {
        if (!backbone.channel_preserving && levels > 1) {
            throw std::invalid_argument("neck: pyramid fusion needs equal channels on every level (channel_preserving)");
        }
        if (neck.kind == NeckKind::kSepFpn && (neck.separation_level < 2 || neck.separation_level > levels)) {
            throw std::invalid_argument("neck: separation level P" + std::to_string(neck.separation_level) +
                                        " outside P2..P" + std::to_string(levels));
        }
        if (!(neck.fusion_epsilon > 0.0f)) throw std::invalid_argument("neck: fusion_epsilon must be positive");
    }
    if (ccpm) {
        for (int c : backbone.stage_channels()) {
            if (c % 4 != 0) {
                throw std::invalid_argument("ccpm: level width " + std::to_string(c) + " not divisible by 4");
            }
        }
    }
    if (heads.enabled && heads.maxout_background < 1) {
        throw std::invalid_argument("heads: maxout_background must be at least 1");
    }
}

// ---- builders ---------------------------------------------------------------

std::string add_conv(ModelGraph& g, const std::string& id, const std::string& input, const ConvSpec& spec,
                     const std::string& group, bool shortcut) {
    LayerNode n;
    n.id = id;
    n.kind = spec.is_depthwise() ? LayerKind::kDepthwiseConv : LayerKind::kConv;
    n.spec = spec;
    n.inputs = {input};
    n.weight_names = {id + ".weight"};
    if (spec.has_bias) n.weight_names.push_back(id + ".bias");
    n.group = group;
    n.shortcut = shortcut;
    return g.add(std::move(n));
}

std::string add_relu(ModelGraph& g, const std::string& id, const std::string& input, const std::string& group) {
    LayerNode n;
    n.id = id;
    n.kind = LayerKind::kRelu;
    n.inputs = {input};
    n.group = group;
    return g.add(std::move(n));
}

namespace {

std::string add_binary(ModelGraph& g, LayerKind kind, const std::string& id, std::vector<std::string> inputs,
                       const std::string& group, NodeSpec spec = {}) {
    LayerNode n;
    n.id = id;
    n.kind = kind;
    n.spec = spec;
    n.inputs = std::move(inputs);
    n.group = group;
    return g.add(std::move(n));
}

// Backbone convs carry a bias: the trained layers have none, but the folded
// normalization shift lands there.
constexpr bool kFoldedBias = true;

}  // namespace

std::string add_residual_block(ModelGraph& g, const std::string& prefix, const std::string& input, int in_channels,
                               int channels, int stride, const std::string& group) {
    if (channels < 1 || in_channels < 1) throw std::invalid_argument("residual block: channels must be positive");
    if (stride != 1 && stride != 2) throw std::invalid_argument("residual block: stride must be 1 or 2");
    std::string x = add_conv(g, prefix + ".conv0", input, ConvSpec::square(3, stride, in_channels, channels, kFoldedBias),
                             group);
    x = add_relu(g, prefix + ".relu0", x, group);
    x = add_conv(g, prefix + ".conv1", x, ConvSpec::square(3, 1, channels, channels, kFoldedBias), group);
    std::string skip = input;
    if (stride != 1 || in_channels != channels) {
        skip = add_conv(g, prefix + ".proj", input, ConvSpec::square(1, stride, in_channels, channels, kFoldedBias),
                        group, /*shortcut=*/true);
    }
    x = add_binary(g, LayerKind::kAdd, prefix + ".add", {x, skip}, group);
    return add_relu(g, prefix + ".relu1", x, group);
}

std::string add_inverted_residual_block(ModelGraph& g, const std::string& prefix, const std::string& input,
                                        int in_channels, int out_channels, int expansion, int stride,
                                        const std::string& group) {
    if (expansion < 1) throw std::invalid_argument("inverted residual: expansion must be >= 1");
    if (stride != 1 && stride != 2) throw std::invalid_argument("inverted residual: stride must be 1 or 2");
    const int hidden = in_channels * expansion;
    std::string x = add_conv(g, prefix + ".expand", input, ConvSpec::square(1, 1, in_channels, hidden, kFoldedBias),
                             group);
    x = add_relu(g, prefix + ".relu0", x, group);
    x = add_conv(g, prefix + ".dw", x, ConvSpec::square(3, stride, hidden, hidden, kFoldedBias, hidden), group);
    x = add_relu(g, prefix + ".relu1", x, group);
    x = add_conv(g, prefix + ".project", x, ConvSpec::square(1, 1, hidden, out_channels, kFoldedBias), group);
    if (stride == 1 && in_channels == out_channels) {
        x = add_binary(g, LayerKind::kAdd, prefix + ".add", {x, input}, group);
    }
    return x;
}

std::string add_eresnet_stem(ModelGraph& g, const std::string& input, int in_channels, int base_channels) {
    if (base_channels < 1) throw std::invalid_argument("stem: base_channels must be positive");
    std::string x = add_conv(g, "stem.conv0", input, ConvSpec::square(5, 4, in_channels, base_channels, kFoldedBias),
                             "stem");
    x = add_relu(g, "stem.relu0", x, "stem");
    for (int i = 1; i <= 2; ++i) {
        x = add_conv(g, "stem.conv" + std::to_string(i), x,
                     ConvSpec::square(3, 1, base_channels, base_channels, kFoldedBias), "stem");
        x = add_relu(g, "stem.relu" + std::to_string(i), x, "stem");
    }
    return x;
}

std::string add_resnet_stem(ModelGraph& g, const std::string& input, int in_channels, int base_channels) {
    if (base_channels < 1) throw std::invalid_argument("stem: base_channels must be positive");
    std::string x = add_conv(g, "stem.conv0", input, ConvSpec::square(7, 2, in_channels, base_channels, kFoldedBias),
                             "stem");
    x = add_relu(g, "stem.relu0", x, "stem");
    return add_binary(g, LayerKind::kMaxPool, "stem.pool", {x}, "stem", PoolSpec{3, 2, 1});
}

BackboneTaps add_backbone(ModelGraph& g, const BackboneConfig& cfg, const std::string& input, int in_channels) {
    cfg.validate();
    const int base = cfg.base_channels();
    std::string x = cfg.stem == StemKind::kEResNet ? add_eresnet_stem(g, input, in_channels, base)
                                                   : add_resnet_stem(g, input, in_channels, base);
    BackboneTaps taps;
    int stride = 4;
    int channels = base;
    const std::vector<int> widths = cfg.stage_channels();
    for (std::size_t s = 0; s < cfg.stage_blocks.size(); ++s) {
        const std::string stage = "stage" + std::to_string(s + 1);
        for (int b = 0; b < cfg.stage_blocks[s]; ++b) {
            const int block_stride = b == 0 ? cfg.stage_strides[s] : 1;
            x = add_residual_block(g, stage + ".block" + std::to_string(b), x, channels, widths[s], block_stride, stage);
            channels = widths[s];
        }
        stride *= cfg.stage_strides[s];
        taps.ids.push_back(x);
        taps.channels.push_back(channels);
        taps.strides.push_back(stride);
    }
    return taps;
}

std::vector<std::string> add_neck(ModelGraph& g, const BackboneTaps& taps, const NeckConfig& cfg) {
    const int levels = static_cast<int>(taps.ids.size());
    if (cfg.kind == NeckKind::kNone) return taps.ids;
    for (int c : taps.channels) {
        if (c != taps.channels.front()) {
            throw std::invalid_argument("neck: all backbone taps must share one channel count");
        }
    }
    // Upper group is [split, levels], lower group [1, split - 1] (1-based).
    const int split = cfg.kind == NeckKind::kSepFpn ? cfg.separation_level : 1;
    if (split < 1 || split > levels) {
        throw std::invalid_argument("neck: separation level P" + std::to_string(split) + " out of range");
    }
    std::vector<std::string> p(static_cast<std::size_t>(levels));
    auto run_group = [&](int lo, int hi) {
        p[hi - 1] = taps.ids[hi - 1];
        for (int k = hi - 1; k >= lo; --k) {
            const std::string lvl = std::to_string(k);
            const std::string up = add_binary(g, LayerKind::kUpsample, "neck.up" + lvl, {p[k], taps.ids[k - 1]}, "neck");
            LayerNode fuse;
            fuse.id = "neck.fuse" + lvl;
            fuse.kind = LayerKind::kWeightedFusion;
            fuse.spec = FusionSpec{cfg.fusion_epsilon};
            fuse.inputs = {taps.ids[k - 1], up};
            fuse.weight_names = {fuse.id + ".w0", fuse.id + ".w1"};
            fuse.group = "neck";
            p[k - 1] = g.add(std::move(fuse));
        }
    };
    run_group(split, levels);
    if (split > 1) run_group(1, split - 1);
    return p;
}

std::string add_ccpm(ModelGraph& g, int level, const std::string& input, int channels) {
    if (channels % 4 != 0 || channels < 4) {
        throw std::invalid_argument("ccpm: channel count " + std::to_string(channels) + " not divisible by 4");
    }
    const std::string prefix = "ccpm." + std::to_string(level);
    const int widths[3] = {channels / 2, channels / 4, channels / 4};
    std::vector<std::string> branches;
    std::string x = input;
    int in = channels;
    for (int i = 0; i < 3; ++i) {
        const std::string idx = std::to_string(i);
        x = add_conv(g, prefix + ".conv" + idx, x, ConvSpec::square(3, 1, in, widths[i], true), "ccpm");
        x = add_relu(g, prefix + ".relu" + idx, x, "ccpm");
        branches.push_back(x);
        in = widths[i];
    }
    return add_binary(g, LayerKind::kConcat, prefix + ".concat", branches, "ccpm");
}

std::vector<HeadIds> add_heads(ModelGraph& g, const std::vector<std::string>& levels, const std::vector<int>& channels,
                               const HeadConfig& cfg) {
    std::vector<HeadIds> out;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        const std::string lvl = std::to_string(i + 1);
        const std::string prefix = "head." + lvl;
        HeadIds ids;
        ids.reg = add_conv(g, prefix + ".reg", levels[i], ConvSpec::square(1, 1, channels[i], 4, true), "heads");
        const bool maxout = i == 0;
        const int cls_channels = maxout ? cfg.maxout_background + 1 : 2;
        std::string cls = add_conv(g, prefix + ".cls", levels[i], ConvSpec::square(1, 1, channels[i], cls_channels, true),
                                   "heads");
        if (maxout) {
            cls = add_binary(g, LayerKind::kMaxOut, prefix + ".maxout", {cls}, "heads", MaxOutSpec{cfg.maxout_background});
        }
        ids.cls = add_binary(g, LayerKind::kSoftmax, prefix + ".softmax", {cls}, "heads", SoftmaxSpec{2});
        out.push_back(ids);
    }
    return out;
}

ModelGraph build_model(const ModelConfig& cfg) {
    cfg.validate();
    ModelGraph g(Shape{1, cfg.input_channels, 0, 0});
    const BackboneTaps taps = add_backbone(g, cfg.backbone, std::string(ModelGraph::kInput), cfg.input_channels);
    for (std::size_t i = 0; i < taps.ids.size(); ++i) g.set_output("C" + std::to_string(i + 1), taps.ids[i]);

    std::vector<std::string> levels = add_neck(g, taps, cfg.neck);
    if (cfg.ccpm) {
        for (std::size_t i = 0; i < levels.size(); ++i) {
            levels[i] = add_ccpm(g, static_cast<int>(i + 1), levels[i], taps.channels[i]);
        }
    }
    if (cfg.neck.kind != NeckKind::kNone || cfg.ccpm) {
        for (std::size_t i = 0; i < levels.size(); ++i) g.set_output("P" + std::to_string(i + 1), levels[i]);
    }
    if (cfg.heads.enabled) {
        const auto heads = add_heads(g, levels, taps.channels, cfg.heads);
        for (std::size_t i = 0; i < heads.size(); ++i) {
            const std::string d = "D" + std::to_string(i + 1);
            g.set_output(d + ".reg", heads[i].reg);
            g.set_output(d + ".cls", heads[i].cls);
        }
    }
    return g;
}

ModelGraph make_conv_graph(const ConvSpec& spec) {
    ModelGraph g(Shape{1, spec.in_channels, 0, 0});
    g.set_output("out", add_conv(g, "conv", std::string(ModelGraph::kInput), spec, "block"));
    return g;
}

ModelGraph make_separable_graph(int channels, int kernel, int stride) {
    ModelGraph g(Shape{1, channels, 0, 0});
    std::string x = add_conv(g, "dw", std::string(ModelGraph::kInput),
                             ConvSpec::square(kernel, stride, channels, channels, false, channels), "block");
    x = add_conv(g, "pw", x, ConvSpec::square(1, 1, channels, channels, false), "block");
    g.set_output("out", x);
    return g;
}

ModelGraph make_residual_block_graph(int channels, int stride, int in_channels) {
    if (in_channels <= 0) in_channels = channels;
    ModelGraph g(Shape{1, in_channels, 0, 0});
    g.set_output("out", add_residual_block(g, "block", std::string(ModelGraph::kInput), in_channels, channels, stride,
                                           "block"));
    return g;
}

ModelGraph make_inverted_residual_graph(int channels, int expansion, int stride) {
    ModelGraph g(Shape{1, channels, 0, 0});
    g.set_output("out", add_inverted_residual_block(g, "block", std::string(ModelGraph::kInput), channels, channels,
                                                    expansion, stride, "block"));
    return g;
}

ModelGraph make_stem_graph(StemKind kind, int in_channels, int base_channels) {
    ModelGraph g(Shape{1, in_channels, 0, 0});
    const std::string in(ModelGraph::kInput);
    g.set_output("out", kind == StemKind::kEResNet ? add_eresnet_stem(g, in, in_channels, base_channels)
                                                   : add_resnet_stem(g, in, in_channels, base_channels));
    return g;
}

namespace {

bool is_backbone_group(const std::string& group) { return group == "stem" || group.starts_with("stage"); }

}  // namespace

int weighted_backbone_layers(const ModelGraph& g) {
    int count = 0;
    for (const auto& n : g.nodes()) {
        if (n.is_weighted() && !n.shortcut && is_backbone_group(n.group)) ++count;
    }
    return count;
}

int residual_block_count(const ModelGraph& g) {
    int count = 0;
    for (const auto& n : g.nodes()) {
        if (n.kind == LayerKind::kAdd && n.group.starts_with("stage")) ++count;
    }
    return count;
}

}  // namespace eresfd
