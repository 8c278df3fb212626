// SPDX-License-Identifier: Apache-2.0
//
// Static cost analysis of a ModelGraph: MACs, parameters, output shapes and
// receptive fields per node, grouped totals, and latency attribution from
// measured per-node timings.
//
// Only convolution MACs are counted. Bias, normalization, activation, pooling
// and fusion arithmetic are excluded.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "eresfd/graph.hpp"
#include "eresfd/latency_stats.hpp"

namespace eresfd {

enum class FlopsConvention {
    kMacs,       // 1 FLOP per multiply-accumulate
    kTwoPerMac,  // 2 FLOPs per multiply-accumulate
};

std::string_view to_string(FlopsConvention c);

inline std::int64_t flops_of(std::int64_t macs, FlopsConvention c) {
    return c == FlopsConvention::kTwoPerMac ? 2 * macs : macs;
}

struct NodeCost {
    std::string id;
    LayerKind kind = LayerKind::kRelu;
    std::string group;
    std::int64_t macs = 0;
    std::int64_t params = 0;
    Shape output_shape;
    std::int64_t receptive_field = 1;
    std::int64_t jump = 1;

    std::int64_t flops(FlopsConvention c) const { return flops_of(macs, c); }
};

struct GroupCost {
    std::string group;
    std::int64_t macs = 0;
    std::int64_t params = 0;
    int nodes = 0;
};

struct CostReport {
    Shape input;
    std::vector<NodeCost> nodes;  // graph order
    std::vector<GroupCost> groups;  // first-appearance order
    std::int64_t total_macs = 0;
    std::int64_t total_params = 0;

    const NodeCost& node(std::string_view id) const;
    std::int64_t total_flops(FlopsConvention c) const { return flops_of(total_macs, c); }
};

/// kh * kw * (in_channels / groups) * out_channels * out_h * out_w * n.
std::int64_t conv_macs(const ConvSpec& spec, const Shape& input);

/// Shape inference plus per-node costs for a concrete input shape.
CostReport analyze(const ModelGraph& g, const Shape& input);

/// Sum over every weighted node of a (block) graph.
std::int64_t block_flops(const ModelGraph& g, const Shape& input, FlopsConvention c);

/// Kernel elements + biases + fusion scalars.
std::int64_t param_count(const ModelGraph& g);

struct ReceptiveField {
    std::int64_t size = 1;
    std::int64_t jump = 1;
    bool operator==(const ReceptiveField&) const = default;
};

/// rf' = rf + (k - 1) * jump, jump' = jump * stride along each path;
/// multi-input nodes take the max over inputs, upsampling halves the jump.
ReceptiveField receptive_field(const ModelGraph& g, std::string_view node_id);

struct GroupLatency {
    std::string group;
    double ms = 0.0;
    double share_pct = 0.0;
    int nodes = 0;
};

struct LatencyBreakdown {
    std::vector<GroupLatency> groups;
    double total_ms = 0.0;

    const GroupLatency& group(std::string_view name) const;
    /// e.g. "24.1ms (42.0%)"
    std::string format(std::string_view name) const;
};

/// Attributes per-node medians to report groups. Every weighted node must have
/// stats; other nodes without stats count as zero.
LatencyBreakdown latency_breakdown(const ModelGraph& g, const std::map<std::string, LatencyStats>& stats);

/// node_id,kind,macs,flops,params,h,w,rf,group
void write_cost_csv(std::ostream& os, const CostReport& report, FlopsConvention c);
void print_cost_table(std::ostream& os, const ModelGraph& g, const CostReport& report, FlopsConvention c);

}  // namespace eresfd
