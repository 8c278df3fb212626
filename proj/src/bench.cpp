// SPDX-License-Identifier: Apache-2.0

#include "eresfd/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "eresfd/cost_model.hpp"
#include "eresfd/executor.hpp"

namespace eresfd {

LatencyStats summarize(std::span<const double> samples_ms) {
    if (samples_ms.empty()) throw std::invalid_argument("summarize: no samples");
    std::vector<double> s(samples_ms.begin(), samples_ms.end());
    std::sort(s.begin(), s.end());
    const std::size_t n = s.size();
    LatencyStats st;
    st.iters = static_cast<int>(n);
    st.median_ms = n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
    const std::size_t rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
    st.p95_ms = s[std::max<std::size_t>(rank, 1) - 1];
    st.mean_ms = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double v : s) var += (v - st.mean_ms) * (v - st.mean_ms);
    st.stddev_ms = std::sqrt(var / static_cast<double>(n));
    return st;
}

void BenchConfig::validate() const {
    if (warmup_iters < 1) throw std::invalid_argument("bench: warmup_iters must be >= 1");
    if (measure_iters < 3) throw std::invalid_argument("bench: measure_iters must be >= 3");
    if (threads < 1) throw std::invalid_argument("bench: threads must be >= 1");
    if (input_shape.n < 1 || input_shape.c < 1 || input_shape.h < 1 || input_shape.w < 1) {
        throw std::invalid_argument("bench: input shape " + input_shape.str() + " must be positive");
    }
}

std::string_view to_string(BenchVariant v) {
    switch (v) {
        case BenchVariant::kStdConv: return "std_conv";
        case BenchVariant::kDwsConv: return "dws_conv";
        case BenchVariant::kResBlock: return "res_block";
        case BenchVariant::kInvResBlock: return "inv_res_block";
        case BenchVariant::kModel: return "model";
    }
    return "?";
}

std::string_view to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::kChannels: return "channels";
        case SweepAxis::kInputSize: return "input_size";
        case SweepAxis::kWidthMultiplier: return "width_multiplier";
    }
    return "?";
}

SweepAxis parse_sweep_axis(std::string_view s) {
    if (s == "channels") return SweepAxis::kChannels;
    if (s == "input_size") return SweepAxis::kInputSize;
    if (s == "width_multiplier") return SweepAxis::kWidthMultiplier;
    throw std::invalid_argument("unknown sweep axis '" + std::string(s) + "' (channels, input_size, width_multiplier)");
}

ModelGraph variant_graph(BenchVariant v, int channels) {
    if (channels < 1) throw std::invalid_argument("bench: channels must be positive");
    switch (v) {
        case BenchVariant::kStdConv: return make_conv_graph(ConvSpec::square(3, 1, channels, channels));
        case BenchVariant::kDwsConv: return make_separable_graph(channels);
        case BenchVariant::kResBlock: return make_residual_block_graph(channels);
        case BenchVariant::kInvResBlock: return make_inverted_residual_graph(channels, 6);
        case BenchVariant::kModel: break;
    }
    throw std::invalid_argument("bench: variant has no layer graph");
}

namespace {

using Clock = std::chrono::steady_clock;

Tensor random_input(const Shape& s, std::uint64_t seed) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<float> dist(0.0f, 1.0f);
    Tensor t(s);
    for (float& v : t.data()) v = dist(rng);
    return t;
}

template <typename Fn>
LatencyStats time_loop(const BenchConfig& cfg, Fn&& fn) {
    for (int i = 0; i < cfg.warmup_iters; ++i) fn();
    std::vector<double> samples;
    samples.reserve(static_cast<std::size_t>(cfg.measure_iters));
    for (int i = 0; i < cfg.measure_iters; ++i) {
        const auto t0 = Clock::now();
        fn();
        const auto t1 = Clock::now();
        samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return summarize(samples);
}

// Keeps results observable so the timed work cannot be elided.
volatile float g_sink = 0.0f;

}  // namespace

LatencyStats bench_node(const ModelGraph& g, const WeightStore& weights, const BenchConfig& cfg) {
    cfg.validate();
    const Executor exec(g, weights, KernelOptions{cfg.path, cfg.threads});
    const Tensor input = random_input(cfg.input_shape, cfg.seed);
    return time_loop(cfg, [&] {
        const auto out = exec.run(input);
        g_sink = out.begin()->second.data()[0];
    });
}

LatencyStats bench_node(const ModelGraph& g, const BenchConfig& cfg) {
    return bench_node(g, make_random_weights(g, cfg.seed), cfg);
}

std::vector<SweepRow> bench_sweep(SweepAxis axis, std::span<const double> values,
                                  std::span<const BenchVariant> variants, const BenchConfig& cfg,
                                  const ModelConfig& model) {
    if (values.empty()) throw std::invalid_argument("bench_sweep: no axis values");
    if (variants.empty()) throw std::invalid_argument("bench_sweep: no variants");
    cfg.validate();
    std::vector<SweepRow> rows;
    for (double value : values) {
        if (!(value > 0.0)) throw std::invalid_argument("bench_sweep: axis values must be positive");
        for (BenchVariant v : variants) {
            BenchConfig run = cfg;
            ModelGraph g;
            if (v == BenchVariant::kModel) {
                ModelConfig m = model;
                switch (axis) {
                    case SweepAxis::kChannels:
                        throw std::invalid_argument("bench_sweep: the channels axis does not apply to whole models");
                    case SweepAxis::kInputSize:
                        run.input_shape.h = run.input_shape.w = std::llround(value);
                        break;
                    case SweepAxis::kWidthMultiplier:
                        m.backbone.width_multiplier = value;
                        break;
                }
                run.input_shape.c = m.input_channels;
                g = build_model(m);
            } else {
                int channels = static_cast<int>(cfg.input_shape.c);
                switch (axis) {
                    case SweepAxis::kChannels:
                        channels = static_cast<int>(std::llround(value));
                        break;
                    case SweepAxis::kInputSize:
                        run.input_shape.h = run.input_shape.w = std::llround(value);
                        break;
                    case SweepAxis::kWidthMultiplier:
                        channels = std::max(1, static_cast<int>(std::lround(16.0 * value)));
                        break;
                }
                run.input_shape.c = channels;
                g = variant_graph(v, channels);
            }
            SweepRow row;
            row.axis_value = value;
            row.variant = std::string(to_string(v));
            row.input = run.input_shape;
            row.macs = analyze(g, run.input_shape).total_macs;
            row.stats = bench_node(g, run);
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

GraphBenchResult bench_graph(const ModelGraph& g, const WeightStore& weights, const BenchConfig& cfg) {
    cfg.validate();
    const Executor exec(g, weights, KernelOptions{cfg.path, cfg.threads});
    const Tensor input = random_input(cfg.input_shape, cfg.seed);

    GraphBenchResult result;
    result.total = time_loop(cfg, [&] {
        const auto out = exec.run(input);
        g_sink = out.begin()->second.data()[0];
    });

    // Capture every node's inputs once, then time nodes in isolation.
    const std::vector<Tensor> trace = exec.run_trace(input);
    const auto& nodes = g.nodes();
    std::vector<const Tensor*> args;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        args.clear();
        for (const auto& in : nodes[i].inputs) {
            args.push_back(in == ModelGraph::kInput ? &input : &trace[g.index_of(in)]);
        }
        NodeTiming t;
        t.id = nodes[i].id;
        t.kind = nodes[i].kind;
        t.group = nodes[i].group;
        t.stats = time_loop(cfg, [&] {
            const Tensor out = exec.run_node(i, args);
            g_sink = out.data()[0];
        });
        result.node_median_sum_ms += t.stats.median_ms;
        result.nodes.push_back(std::move(t));
    }
    result.dispatch_overhead_ms = result.total.median_ms - result.node_median_sum_ms;
    return result;
}

std::string cpu_model_string() {
    std::ifstream in("/proc/cpuinfo");
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("model name", 0) == 0) {
            const auto colon = line.find(':');
            if (colon != std::string::npos) {
                std::string v = line.substr(colon + 1);
                v.erase(0, v.find_first_not_of(" \t"));
                return v;
            }
        }
    }
    return "unknown";
}

BenchMeta BenchMeta::from(const BenchConfig& cfg) {
    return BenchMeta{cfg.threads, cfg.warmup_iters, cfg.measure_iters, cpu_model_string()};
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string fmt_axis(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

nlohmann::json stats_json(const LatencyStats& s) {
    return {{"median_ms", s.median_ms}, {"mean_ms", s.mean_ms}, {"p95_ms", s.p95_ms},
            {"stddev_ms", s.stddev_ms}, {"iters", s.iters}};
}

nlohmann::json meta_json(const BenchMeta& m) {
    return {{"threads", m.threads}, {"warmup_iters", m.warmup_iters}, {"measure_iters", m.measure_iters},
            {"cpu", m.cpu}};
}

}  // namespace

void write_sweep_csv(std::ostream& os, SweepAxis axis, std::span<const SweepRow> rows, const BenchMeta& meta) {
    os << "axis_value,variant,median_ms,macs,mean_ms,p95_ms,stddev_ms,iters,n,c,h,w,threads,warmup,cpu\n";
    (void)axis;
    for (const auto& r : rows) {
        os << fmt_axis(r.axis_value) << ',' << r.variant << ',' << fmt(r.stats.median_ms) << ',' << r.macs << ','
           << fmt(r.stats.mean_ms) << ',' << fmt(r.stats.p95_ms) << ',' << fmt(r.stats.stddev_ms) << ','
           << r.stats.iters << ',' << r.input.n << ',' << r.input.c << ',' << r.input.h << ',' << r.input.w << ','
           << meta.threads << ',' << meta.warmup_iters << ',' << csv_field(meta.cpu) << '\n';
    }
}

void write_sweep_json(std::ostream& os, SweepAxis axis, std::span<const SweepRow> rows, const BenchMeta& meta) {
    nlohmann::json j;
    j["meta"] = meta_json(meta);
    j["axis"] = std::string(to_string(axis));
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json row = stats_json(r.stats);
        row["axis_value"] = r.axis_value;
        row["variant"] = r.variant;
        row["macs"] = r.macs;
        row["input"] = {r.input.n, r.input.c, r.input.h, r.input.w};
        j["rows"].push_back(std::move(row));
    }
    os << j.dump(2) << '\n';
}

void write_graph_csv(std::ostream& os, const GraphBenchResult& r, const BenchMeta& meta) {
    os << "node_id,kind,group,median_ms,mean_ms,p95_ms,stddev_ms,iters,threads,warmup,cpu\n";
    auto line = [&](const std::string& id, std::string_view kind, const std::string& group, const LatencyStats& s) {
        os << id << ',' << kind << ',' << group << ',' << fmt(s.median_ms) << ',' << fmt(s.mean_ms) << ','
           << fmt(s.p95_ms) << ',' << fmt(s.stddev_ms) << ',' << s.iters << ',' << meta.threads << ','
           << meta.warmup_iters << ',' << csv_field(meta.cpu) << '\n';
    };
    for (const auto& n : r.nodes) line(n.id, to_string(n.kind), n.group, n.stats);
    line("TOTAL", "graph", "", r.total);
}

void write_graph_json(std::ostream& os, const GraphBenchResult& r, const BenchMeta& meta) {
    nlohmann::json j;
    j["meta"] = meta_json(meta);
    j["total"] = stats_json(r.total);
    j["node_median_sum_ms"] = r.node_median_sum_ms;
    j["dispatch_overhead_ms"] = r.dispatch_overhead_ms;
    j["nodes"] = nlohmann::json::array();
    for (const auto& n : r.nodes) {
        nlohmann::json node = stats_json(n.stats);
        node["node_id"] = n.id;
        node["kind"] = std::string(to_string(n.kind));
        node["group"] = n.group;
        j["nodes"].push_back(std::move(node));
    }
    os << j.dump(2) << '\n';
}

}  // namespace eresfd
