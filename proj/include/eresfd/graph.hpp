// SPDX-License-Identifier: Apache-2.0
//
// Layer graph and the builders that assemble residual / inverted-residual
// blocks, the two stem variants, the channel-preserving backbone, the
// separated top-down pyramid, the cascade context module and the 1x1 heads.

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "eresfd/kernels.hpp"
#include "eresfd/tensor.hpp"

namespace eresfd {

enum class LayerKind {
    kConv,
    kDepthwiseConv,
    kRelu,
    kMaxPool,
    kUpsample,
    kAdd,
    kWeightedFusion,
    kConcat,
    kSoftmax,
    kMaxOut,
};

std::string_view to_string(LayerKind kind);

struct FusionSpec {
    float epsilon = 1e-4f;
};

struct SoftmaxSpec {
    int group = 2;
};

struct MaxOutSpec {
    int background_channels = 3;
};

using NodeSpec = std::variant<std::monostate, ConvSpec, PoolSpec, FusionSpec, SoftmaxSpec, MaxOutSpec>;

struct LayerNode {
    std::string id;
    LayerKind kind = LayerKind::kRelu;
    NodeSpec spec;
    std::vector<std::string> inputs;
    std::vector<std::string> weight_names;
    /// Reporting bucket: "stem", "stage1".."stage6", "neck", "ccpm", "heads", "block".
    std::string group;
    /// 1x1 projection on a residual skip path. Not counted as a backbone layer.
    bool shortcut = false;

    bool is_weighted() const { return kind == LayerKind::kConv || kind == LayerKind::kDepthwiseConv; }
    const ConvSpec& conv() const { return std::get<ConvSpec>(spec); }
};

/// Raised for structural problems (bad ids, cycles, missing outputs) and for
/// execution failures; the message always names the offending node.
struct GraphError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class ModelGraph {
public:
    static constexpr std::string_view kInput = "input";

    ModelGraph() = default;
    /// h == 0 or w == 0 leaves that spatial dim free.
    explicit ModelGraph(Shape input_spec) : input_spec_(input_spec) {}

    /// Appends a node. Inputs must name the graph input or an earlier node,
    /// which keeps the node list topologically ordered.
    const std::string& add(LayerNode node);

    void set_output(std::string name, std::string node_id);

    const std::vector<LayerNode>& nodes() const { return nodes_; }
    const LayerNode& node(std::string_view id) const;
    const LayerNode* find(std::string_view id) const;
    std::size_t index_of(std::string_view id) const;
    bool contains(std::string_view id) const { return find(id) != nullptr; }

    const std::vector<std::pair<std::string, std::string>>& outputs() const { return outputs_; }
    std::optional<std::string> output(std::string_view name) const;

    const Shape& input_spec() const { return input_spec_; }

private:
    Shape input_spec_{1, 3, 0, 0};
    std::vector<LayerNode> nodes_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::pair<std::string, std::string>> outputs_;
};

enum class StemKind { kEResNet, kResNet };

struct BackboneConfig {
    StemKind stem = StemKind::kEResNet;
    double width_multiplier = 1.0;
    /// Channel width at multiplier 1 (16 for EResNet, 64 for ResNet18).
    int base_width = 16;
    std::vector<int> stage_blocks{2, 3, 3, 3, 2, 1};
    std::vector<int> stage_strides{1, 2, 2, 2, 2, 2};
    bool channel_preserving = true;

    /// round(base_width * width_multiplier), at least 1.
    int base_channels() const;
    std::vector<int> stage_channels() const;
    void validate() const;
};

enum class NeckKind { kNone, kSepFpn, kFpn };

struct NeckConfig {
    NeckKind kind = NeckKind::kSepFpn;
    /// Lowest pyramid level (1-based) of the upper group; 5 means {P5, P6}
    /// are fused separately from {P1..P4}.
    int separation_level = 5;
    float fusion_epsilon = 1e-4f;
};

struct HeadConfig {
    bool enabled = true;
    /// Background logits predicted on the first level and reduced by max.
    int maxout_background = 3;
};

struct ModelConfig {
    int input_channels = 3;
    BackboneConfig backbone;
    NeckConfig neck;
    bool ccpm = true;
    HeadConfig heads;

    static ModelConfig eresfd(double width_multiplier = 1.0);
    /// ResNet18 backbone only (7x7 stem + pool, 2-2-2-2 blocks, doubling widths).
    static ModelConfig resnet18(double width_multiplier = 1.0);

    void validate() const;
};

// ---- builders -----------------------------------------------------------
//
// Each add_* function appends nodes to `g` reading from node `input` and
// returns the id of its output node. Conv node ids double as weight base
// names: a conv "x" reads "x.weight" and, if it has a bias, "x.bias".

std::string add_conv(ModelGraph& g, const std::string& id, const std::string& input, const ConvSpec& spec,
                     const std::string& group, bool shortcut = false);
std::string add_relu(ModelGraph& g, const std::string& id, const std::string& input, const std::string& group);

/// Two 3x3 convs (the first carries the stride), skip add, ReLU after the add.
/// The skip is a 1x1 strided projection when stride != 1 or widths differ.
std::string add_residual_block(ModelGraph& g, const std::string& prefix, const std::string& input, int in_channels,
                               int channels, int stride, const std::string& group);

/// 1x1 expand, 3x3 depthwise (stride), 1x1 linear projection; skip add only
/// when stride == 1 and widths match.
std::string add_inverted_residual_block(ModelGraph& g, const std::string& prefix, const std::string& input,
                                        int in_channels, int out_channels, int expansion, int stride,
                                        const std::string& group);

/// 5x5 stride-4 conv followed by two 3x3 stride-1 convs, ReLU after each.
std::string add_eresnet_stem(ModelGraph& g, const std::string& input, int in_channels, int base_channels);

/// 7x7 stride-2 conv + ReLU + 3x3 stride-2 max pool.
std::string add_resnet_stem(ModelGraph& g, const std::string& input, int in_channels, int base_channels);

struct BackboneTaps {
    std::vector<std::string> ids;  // C1..Ck
    std::vector<int> channels;
    std::vector<int> strides;  // cumulative output stride per tap
};

BackboneTaps add_backbone(ModelGraph& g, const BackboneConfig& cfg, const std::string& input, int in_channels);

/// Returns P1..Pk node ids. Each group runs its own top-down path:
/// P_top = C_top and P_k = fuse(C_k, upsample(P_k+1)). No bottom-up edges.
std::vector<std::string> add_neck(ModelGraph& g, const BackboneTaps& taps, const NeckConfig& cfg);

/// Cascade of three 3x3 convs C -> C/2 -> C/4 -> C/4, each reading the
/// previous one's output; the three outputs are concatenated back to C.
std::string add_ccpm(ModelGraph& g, int level, const std::string& input, int channels);

struct HeadIds {
    std::string reg;
    std::string cls;  // softmax probabilities, 2 channels (background, face)
};

std::vector<HeadIds> add_heads(ModelGraph& g, const std::vector<std::string>& levels,
                               const std::vector<int>& channels, const HeadConfig& cfg);

/// Full detector graph. Outputs: C1..Ck, P1..Pk (when a neck or CCPM is
/// present), D{k}.reg / D{k}.cls (when heads are enabled).
ModelGraph build_model(const ModelConfig& cfg);

// Standalone graphs with a single output "out", used by the cost model tests
// and the microbenchmarks. Spatial input dims are left free.
ModelGraph make_conv_graph(const ConvSpec& spec);
ModelGraph make_separable_graph(int channels, int kernel = 3, int stride = 1);
ModelGraph make_residual_block_graph(int channels, int stride = 1, int in_channels = 0);
ModelGraph make_inverted_residual_graph(int channels, int expansion = 6, int stride = 1);
ModelGraph make_stem_graph(StemKind kind, int in_channels, int base_channels);

// ---- structural queries ---------------------------------------------------

/// Main-path convs of the stem and stages (shortcut projections excluded).
int weighted_backbone_layers(const ModelGraph& g);
int residual_block_count(const ModelGraph& g);

}  // namespace eresfd
