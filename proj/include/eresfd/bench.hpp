// SPDX-License-Identifier: Apache-2.0
//
// CPU latency measurement for single layers, blocks and whole graphs.
// Timings use std::chrono::steady_clock around complete forward calls;
// per-node graph timings come from separate single-node runs.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "eresfd/graph.hpp"
#include "eresfd/kernels.hpp"
#include "eresfd/latency_stats.hpp"
#include "eresfd/weights.hpp"

namespace eresfd {

struct BenchConfig {
    int warmup_iters = 20;
    int measure_iters = 100;
    int threads = 1;
    Shape input_shape{1, 16, 16, 16};
    std::uint64_t seed = 0;
    KernelPath path = KernelPath::kOptimized;

    void validate() const;
};

enum class BenchVariant {
    kStdConv,      // 3x3 conv, C -> C
    kDwsConv,      // 3x3 depthwise + 1x1 pointwise, C -> C
    kResBlock,     // basic residual block
    kInvResBlock,  // inverted residual block, expansion 6
    kModel,        // full detector graph built from a ModelConfig
};

std::string_view to_string(BenchVariant v);

enum class SweepAxis { kChannels, kInputSize, kWidthMultiplier };

std::string_view to_string(SweepAxis a);
/// Throws std::invalid_argument for anything but channels / input_size / width_multiplier.
SweepAxis parse_sweep_axis(std::string_view s);

/// Graph for a layer/block variant at `channels` width.
ModelGraph variant_graph(BenchVariant v, int channels);

/// Times g (random weights and input from cfg.seed) on cfg.input_shape.
LatencyStats bench_node(const ModelGraph& g, const BenchConfig& cfg);
LatencyStats bench_node(const ModelGraph& g, const WeightStore& weights, const BenchConfig& cfg);

struct SweepRow {
    double axis_value = 0.0;
    std::string variant;
    LatencyStats stats;
    std::int64_t macs = 0;
    Shape input;
};

/// One row per (value, variant), values in the given order. The channels and
/// input_size axes override cfg.input_shape's c and h/w; width_multiplier sets
/// the channel count to round(16 * m) for layer/block variants and rebuilds the
/// model for kModel. `model` is only read for kModel.
std::vector<SweepRow> bench_sweep(SweepAxis axis, std::span<const double> values,
                                  std::span<const BenchVariant> variants, const BenchConfig& cfg,
                                  const ModelConfig& model = ModelConfig::eresfd());

struct NodeTiming {
    std::string id;
    LayerKind kind = LayerKind::kRelu;
    std::string group;
    LatencyStats stats;
};

struct GraphBenchResult {
    std::vector<NodeTiming> nodes;
    LatencyStats total;
    double node_median_sum_ms = 0.0;
    /// total.median_ms - node_median_sum_ms
    double dispatch_overhead_ms = 0.0;
};

GraphBenchResult bench_graph(const ModelGraph& g, const WeightStore& weights, const BenchConfig& cfg);

/// "model name" from /proc/cpuinfo, or "unknown".
std::string cpu_model_string();

struct BenchMeta {
    int threads = 1;
    int warmup_iters = 0;
    int measure_iters = 0;
    std::string cpu;

    static BenchMeta from(const BenchConfig& cfg);
};

/// axis_value,variant,median_ms,macs,mean_ms,p95_ms,stddev_ms,iters,n,c,h,w,threads,warmup,cpu
void write_sweep_csv(std::ostream& os, SweepAxis axis, std::span<const SweepRow> rows, const BenchMeta& meta);
void write_sweep_json(std::ostream& os, SweepAxis axis, std::span<const SweepRow> rows, const BenchMeta& meta);

/// node_id,kind,group,median_ms,mean_ms,p95_ms,stddev_ms,iters,threads,warmup,cpu
/// followed by a "TOTAL" row for the whole-graph timing.
void write_graph_csv(std::ostream& os, const GraphBenchResult& r, const BenchMeta& meta);
void write_graph_json(std::ostream& os, const GraphBenchResult& r, const BenchMeta& meta);

}  // namespace eresfd
