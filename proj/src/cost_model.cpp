// SPDX-License-Identifier: Apache-2.0

#include "eresfd/cost_model.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace eresfd {

std::string_view to_string(FlopsConvention c) { return c == FlopsConvention::kMacs ? "macs" : "2xmacs"; }

const NodeCost& CostReport::node(std::string_view id) const {
    for (const auto& n : nodes) {
        if (n.id == id) return n;
    }
    throw GraphError("cost report has no node '" + std::string(id) + "'");
}

std::int64_t conv_macs(const ConvSpec& spec, const Shape& input) {
    const Shape out = spec.output_shape(input);
    return static_cast<std::int64_t>(spec.kernel_h) * spec.kernel_w * (spec.in_channels / spec.groups) *
           spec.out_channels * out.h * out.w * out.n;
}

namespace {

std::int64_t node_params(const LayerNode& n) {
    if (n.is_weighted()) {
        const ConvSpec& s = n.conv();
        return s.weight_shape().numel() + (s.has_bias ? s.out_channels : 0);
    }
    if (n.kind == LayerKind::kWeightedFusion) return static_cast<std::int64_t>(n.weight_names.size());
    return 0;
}

Shape infer_shape(const LayerNode& n, const std::vector<const Shape*>& in) {
    const Shape& x = *in.at(0);
    switch (n.kind) {
        case LayerKind::kConv:
        case LayerKind::kDepthwiseConv:
            return n.conv().output_shape(x);
        case LayerKind::kRelu:
        case LayerKind::kSoftmax:
            return x;
        case LayerKind::kMaxPool:
            return std::get<PoolSpec>(n.spec).output_shape(x);
        case LayerKind::kUpsample: {
            Shape out{x.n, x.c, 2 * x.h, 2 * x.w};
            if (in.size() > 1) {
                if (in[1]->h > out.h || in[1]->w > out.w) throw std::invalid_argument("upsample reference larger than 2x");
                out.h = in[1]->h;
                out.w = in[1]->w;
            }
            return out;
        }
        case LayerKind::kAdd:
        case LayerKind::kWeightedFusion:
            for (const Shape* s : in) {
                if (*s != x) throw std::invalid_argument("input shapes differ: " + x.str() + " vs " + s->str());
            }
            return x;
        case LayerKind::kConcat: {
            Shape out = x;
            out.c = 0;
            for (const Shape* s : in) {
                if (s->n != x.n || s->h != x.h || s->w != x.w) {
                    throw std::invalid_argument("concat spatial mismatch " + x.str() + " vs " + s->str());
                }
                out.c += s->c;
            }
            return out;
        }
        case LayerKind::kMaxOut: {
            const int bg = std::get<MaxOutSpec>(n.spec).background_channels;
            if (x.c != bg + 1) throw std::invalid_argument("maxout expects " + std::to_string(bg + 1) + " channels");
            return Shape{x.n, 2, x.h, x.w};
        }
    }
    throw std::invalid_argument("unsupported kind");
}

ReceptiveField propagate_rf(const LayerNode& n, const std::vector<ReceptiveField>& in) {
    ReceptiveField rf = in.at(0);
    for (const auto& r : in) {
        rf.size = std::max(rf.size, r.size);
        rf.jump = std::max(rf.jump, r.jump);
    }
    switch (n.kind) {
        case LayerKind::kConv:
        case LayerKind::kDepthwiseConv: {
            const ConvSpec& s = n.conv();
            const int k = std::max(s.kernel_h, s.kernel_w);
            const int stride = std::max(s.stride_h, s.stride_w);
            return {rf.size + (k - 1) * rf.jump, rf.jump * stride};
        }
        case LayerKind::kMaxPool: {
            const PoolSpec& p = std::get<PoolSpec>(n.spec);
            return {rf.size + (p.kernel - 1) * rf.jump, rf.jump * p.stride};
        }
        case LayerKind::kUpsample:
            // The upsampled map inherits the source receptive field; only the
            // step between neighbouring outputs shrinks.
            return {in[0].size, std::max<std::int64_t>(1, in[0].jump / 2)};
        default:
            return rf;
    }
}

std::vector<ReceptiveField> all_receptive_fields(const ModelGraph& g) {
    std::vector<ReceptiveField> rfs;
    rfs.reserve(g.nodes().size());
    std::vector<ReceptiveField> args;
    for (const auto& n : g.nodes()) {
        args.clear();
        for (const auto& in : n.inputs) {
            args.push_back(in == ModelGraph::kInput ? ReceptiveField{} : rfs[g.index_of(in)]);
        }
        rfs.push_back(propagate_rf(n, args));
    }
    return rfs;
}

}  // namespace

CostReport analyze(const ModelGraph& g, const Shape& input) {
    CostReport report;
    report.input = input;
    const std::vector<ReceptiveField> rfs = all_receptive_fields(g);
    std::vector<Shape> shapes;
    shapes.reserve(g.nodes().size());
    std::vector<const Shape*> args;
    std::map<std::string, std::size_t> group_index;
    for (std::size_t i = 0; i < g.nodes().size(); ++i) {
        const LayerNode& n = g.nodes()[i];
        args.clear();
        for (const auto& in : n.inputs) args.push_back(in == ModelGraph::kInput ? &input : &shapes[g.index_of(in)]);
        NodeCost cost;
        cost.id = n.id;
        cost.kind = n.kind;
        cost.group = n.group;
        try {
            cost.output_shape = infer_shape(n, args);
            if (n.is_weighted()) cost.macs = conv_macs(n.conv(), *args[0]);
        } catch (const std::exception& e) {
            throw GraphError("node '" + n.id + "': " + e.what());
        }
        shapes.push_back(cost.output_shape);
        cost.params = node_params(n);
        cost.receptive_field = rfs[i].size;
        cost.jump = rfs[i].jump;

        auto [it, inserted] = group_index.emplace(n.group, report.groups.size());
        if (inserted) report.groups.push_back(GroupCost{n.group});
        GroupCost& grp = report.groups[it->second];
        grp.macs += cost.macs;
        grp.params += cost.params;
        ++grp.nodes;
        report.total_macs += cost.macs;
        report.total_params += cost.params;
        report.nodes.push_back(std::move(cost));
    }
    return report;
}

std::int64_t block_flops(const ModelGraph& g, const Shape& input, FlopsConvention c) {
    return analyze(g, input).total_flops(c);
}

std::int64_t param_count(const ModelGraph& g) {
    std::int64_t total = 0;
    for (const auto& n : g.nodes()) total += node_params(n);
    return total;
}

ReceptiveField receptive_field(const ModelGraph& g, std::string_view node_id) {
    if (node_id == ModelGraph::kInput) return {};
    const std::size_t idx = g.index_of(node_id);
    return all_receptive_fields(g)[idx];
}

const GroupLatency& LatencyBreakdown::group(std::string_view name) const {
    for (const auto& grp : groups) {
        if (grp.group == name) return grp;
    }
    throw std::out_of_range("no latency group '" + std::string(name) + "'");
}

std::string LatencyBreakdown::format(std::string_view name) const {
    const GroupLatency& grp = group(name);
    std::ostringstream os;
    os << std::fixed << std::setprecision(1) << grp.ms << "ms (" << grp.share_pct << "%)";
    return os.str();
}

LatencyBreakdown latency_breakdown(const ModelGraph& g, const std::map<std::string, LatencyStats>& stats) {
    LatencyBreakdown out;
    std::map<std::string, std::size_t> index;
    for (const auto& n : g.nodes()) {
        auto it = stats.find(n.id);
        if (it == stats.end() && n.is_weighted()) {
            throw std::invalid_argument("latency_breakdown: no stats for weighted node '" + n.id + "'");
        }
        const double ms = it == stats.end() ? 0.0 : it->second.median_ms;
        auto [gi, inserted] = index.emplace(n.group, out.groups.size());
        if (inserted) out.groups.push_back(GroupLatency{n.group});
        out.groups[gi->second].ms += ms;
        ++out.groups[gi->second].nodes;
        out.total_ms += ms;
    }
    for (auto& grp : out.groups) grp.share_pct = out.total_ms > 0.0 ? 100.0 * grp.ms / out.total_ms : 0.0;
    return out;
}

void write_cost_csv(std::ostream& os, const CostReport& report, FlopsConvention c) {
    os << "node_id,kind,macs,flops,params,h,w,rf,group\n";
    for (const auto& n : report.nodes) {
        os << n.id << ',' << to_string(n.kind) << ',' << n.macs << ',' << n.flops(c) << ',' << n.params << ','
           << n.output_shape.h << ',' << n.output_shape.w << ',' << n.receptive_field << ',' << n.group << '\n';
    }
}

namespace {

std::string millions(std::int64_t v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(1) << static_cast<double>(v) / 1e6 << " M";
    return os.str();
}

}  // namespace

void print_cost_table(std::ostream& os, const ModelGraph& g, const CostReport& report, FlopsConvention c) {
    const std::string unit = c == FlopsConvention::kMacs ? "FLOPs(1/MAC)" : "FLOPs(2/MAC)";
    os << "input " << report.input.str() << ", convention " << to_string(c) << "\n\n";
    os << std::left << std::setw(28) << "node" << std::setw(16) << "kind" << std::setw(20) << "output" << std::right
       << std::setw(14) << unit << std::setw(10) << "params" << std::setw(8) << "rf" << "\n";
    for (const auto& n : report.nodes) {
        os << std::left << std::setw(28) << n.id << std::setw(16) << to_string(n.kind) << std::setw(20)
           << n.output_shape.str() << std::right << std::setw(14) << n.flops(c) << std::setw(10) << n.params
           << std::setw(8) << n.receptive_field << "\n";
    }
    os << "\n" << std::left << std::setw(12) << "group" << std::right << std::setw(16) << unit << std::setw(12)
       << "(M)" << std::setw(12) << "params" << "\n";
    for (const auto& grp : report.groups) {
        os << std::left << std::setw(12) << grp.group << std::right << std::setw(16) << flops_of(grp.macs, c)
           << std::setw(12) << millions(flops_of(grp.macs, c)) << std::setw(12) << grp.params << "\n";
    }
    os << "\ntotal " << unit << ": " << report.total_flops(c) << " (" << millions(report.total_flops(c)) << ")\n";
    os << "total params: " << report.total_params << "\n";
    os << "weighted backbone layers: " << weighted_backbone_layers(g) << "\n";
    os << "residual blocks: " << residual_block_count(g) << "\n";
    for (const auto& grp : report.groups) {
        if (grp.group == "stem") os << "Stem FLOPs: " << millions(flops_of(grp.macs, c)) << "\n";
    }
    const NodeCost* stem_out = nullptr;
    for (const auto& n : report.nodes) {
        if (n.group == "stem") stem_out = &n;
    }
    if (stem_out) os << "stem receptive field: " << stem_out->receptive_field << " (jump " << stem_out->jump << ")\n";
    if (auto c1 = g.output("C1")) {
        const NodeCost& tap = report.node(*c1);
        os << "C1 receptive field: " << tap.receptive_field << " (jump " << tap.jump << ")\n";
    }
    os << "note: normalization, activation, pooling, fusion and bias arithmetic are not counted.\n";
}

}  // namespace eresfd
