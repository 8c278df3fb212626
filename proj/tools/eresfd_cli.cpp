// SPDX-License-Identifier: Apache-2.0
//
// eresfd: cost analysis, latency sweeps, detection and weight utilities.
//
// Exit status: 0 success, 2 bad arguments / missing or malformed input files,
// 1 anything else.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "eresfd/bench.hpp"
#include "eresfd/byte_io.hpp"
#include "eresfd/config.hpp"
#include "eresfd/cost_model.hpp"
#include "eresfd/detect.hpp"
#include "eresfd/executor.hpp"
#include "eresfd/image.hpp"
#include "eresfd/weights.hpp"

namespace {

using namespace eresfd;

/// Problems with what the user handed us; mapped to exit status 2.
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <typename Fn>
auto load_input(Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const InputError&) {
        throw;
    } catch (const std::exception& e) {
        throw InputError(e.what());
    }
}

ModelFile config_or_default(const std::string& path) {
    if (path.empty()) return ModelFile{};
    return load_input([&] { return load_model_config(path); });
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const double v = std::stod(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            out.push_back(v);
        } catch (const std::exception&) {
            throw InputError(what + ": '" + item + "' is not a number");
        }
    }
    if (out.empty()) throw InputError(what + ": empty list");
    return out;
}

/// Output to a file when `path` is set, stdout otherwise.
template <typename Fn>
void emit(const std::string& path, Fn&& write) {
    if (path.empty()) {
        write(std::cout);
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open '" + path + "' for writing");
    write(out);
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

// ---- analyze ---------------------------------------------------------------

struct AnalyzeArgs {
    std::string config;
    std::string convention = "macs";
    std::string csv;
};

int run_analyze(const AnalyzeArgs& a) {
    const ModelFile f = config_or_default(a.config);
    const FlopsConvention c = a.convention == "2xmacs" ? FlopsConvention::kTwoPerMac : FlopsConvention::kMacs;
    const ModelGraph g = build_model(f.model);
    const CostReport report = analyze(g, f.input_shape());
    print_cost_table(std::cout, g, report, c);
    if (!a.csv.empty()) emit(a.csv, [&](std::ostream& os) { write_cost_csv(os, report, c); });
    return 0;
}

// ---- bench -----------------------------------------------------------------

struct BenchArgs {
    std::string mode;
    std::string sweep;
    std::string config;
    std::string weights;
    std::string csv;
    std::string json;
    int threads = 1;
    int warmup = 20;
    int iters = 100;
    int size = 16;
    int channels = 16;
    std::uint64_t seed = 0;
    bool reference = false;
};

int run_bench(const BenchArgs& a) {
    BenchConfig cfg;
    cfg.threads = a.threads;
    cfg.warmup_iters = a.warmup;
    cfg.measure_iters = a.iters;
    cfg.seed = a.seed;
    cfg.path = a.reference ? KernelPath::kReference : KernelPath::kOptimized;
    try {
        cfg.validate();
    } catch (const std::exception& e) {
        throw InputError(e.what());
    }
    const BenchMeta meta = BenchMeta::from(cfg);

    if (a.mode == "graph" && a.sweep.empty()) {
        const ModelFile f = config_or_default(a.config);
        const ModelGraph g = build_model(f.model);
        const WeightStore weights =
            a.weights.empty() ? make_random_weights(g, a.seed) : load_input([&] { return load_weights(a.weights); });
        cfg.input_shape = f.input_shape();
        const GraphBenchResult r = bench_graph(g, weights, cfg);
        std::map<std::string, LatencyStats> per_node;
        for (const auto& n : r.nodes) per_node[n.id] = n.stats;
        const LatencyBreakdown lb = latency_breakdown(g, per_node);
        std::printf("graph %s, threads %d, cpu %s\n", cfg.input_shape.str().c_str(), meta.threads, meta.cpu.c_str());
        std::printf("total median %.3f ms (p95 %.3f ms, %d iters)\n", r.total.median_ms, r.total.p95_ms, r.total.iters);
        std::printf("sum of node medians %.3f ms, dispatch overhead %.3f ms\n", r.node_median_sum_ms,
                    r.dispatch_overhead_ms);
        for (const auto& grp : lb.groups) std::printf("  %-8s %s\n", grp.group.c_str(), lb.format(grp.group).c_str());
        if (!a.csv.empty()) emit(a.csv, [&](std::ostream& os) { write_graph_csv(os, r, meta); });
        if (!a.json.empty()) emit(a.json, [&](std::ostream& os) { write_graph_json(os, r, meta); });
        return 0;
    }

    if (a.sweep.empty()) throw InputError("bench " + a.mode + ": --sweep <axis>=<v1,v2,...> is required");
    const auto eq = a.sweep.find('=');
    if (eq == std::string::npos) throw InputError("--sweep: expected <axis>=<v1,v2,...>");
    const SweepAxis axis = load_input([&] { return parse_sweep_axis(a.sweep.substr(0, eq)); });
    const std::vector<double> values = parse_list(a.sweep.substr(eq + 1), "--sweep");

    std::vector<BenchVariant> variants;
    ModelConfig model;
    if (a.mode == "layer") {
        variants = {BenchVariant::kStdConv, BenchVariant::kDwsConv};
    } else if (a.mode == "block") {
        variants = {BenchVariant::kResBlock, BenchVariant::kInvResBlock};
    } else {
        if (axis == SweepAxis::kChannels) throw InputError("bench graph: sweep input_size or width_multiplier");
        variants = {BenchVariant::kModel};
        const ModelFile f = config_or_default(a.config);
        model = f.model;
        cfg.input_shape = f.input_shape();
    }
    if (a.mode != "graph") cfg.input_shape = Shape{1, a.channels, a.size, a.size};
    const std::vector<SweepRow> rows = bench_sweep(axis, values, variants, cfg, model);
    emit(a.csv, [&](std::ostream& os) { write_sweep_csv(os, axis, rows, meta); });
    if (!a.json.empty()) emit(a.json, [&](std::ostream& os) { write_sweep_json(os, axis, rows, meta); });
    return 0;
}

// ---- detect ----------------------------------------------------------------

struct DetectArgs {
    std::string config;
    std::string weights;
    std::string image;
    float threshold = 0.05f;
    bool flip = false;
    std::string scales = "1";
    bool json = false;
    int threads = 1;
    std::size_t top_k = 5000;
};

int run_detect(const DetectArgs& a) {
    const ModelFile f = config_or_default(a.config);
    if (!f.model.heads.enabled) throw InputError("detect: the configured model has no detection heads");
    const WeightStore weights = load_input([&] { return load_weights(a.weights); });
    const Tensor image = load_input([&] { return load_image(a.image); });
    if (image.shape().n != 1 || image.shape().c != f.model.input_channels) {
        throw InputError("detect: image tensor " + image.shape().str() + " does not match the model input");
    }
    DetectConfig cfg;
    cfg.score_threshold = a.threshold;
    cfg.flip = a.flip;
    cfg.top_k_per_level = a.top_k;
    cfg.scales.clear();
    for (double s : parse_list(a.scales, "--scales")) {
        if (!(s > 0.0)) throw InputError("--scales: values must be positive");
        cfg.scales.push_back(static_cast<float>(s));
    }
    const ModelGraph g = build_model(f.model);
    const Executor exec = load_input([&] { return Executor(g, weights, KernelOptions{KernelPath::kOptimized, a.threads}); });
    const std::vector<DetBox> boxes = detect(image, exec, cfg);
    if (a.json) {
        write_detections_json(std::cout, boxes);
    } else {
        write_detections(std::cout, boxes);
    }
    return 0;
}

// ---- weights ---------------------------------------------------------------

struct WeightArgs {
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    bool checksums = false;
};

int run_random_weights(const WeightArgs& a) {
    const ModelFile f = config_or_default(a.config);
    const ModelGraph g = build_model(f.model);
    const WeightStore store = make_random_weights(g, a.seed);
    load_input([&] { save_weights(store, a.out, a.checksums); });
    std::printf("wrote %zu tensors to %s\n", store.size(), a.out.c_str());
    return 0;
}

int run_manifest(const std::string& config) {
    const ModelFile f = config_or_default(config);
    for (const auto& req : weight_manifest(build_model(f.model))) {
        std::string dims;
        for (std::size_t i = 0; i < req.dims.size(); ++i) dims += (i ? "x" : "") + std::to_string(req.dims[i]);
        std::printf("%s %s\n", req.name.c_str(), dims.c_str());
    }
    return 0;
}

int run_check_weights(const std::string& path) {
    const LoadedWeights loaded = load_input([&] { return load_weights_with_checksums(path); });
    std::printf("%zu tensors\n", loaded.store.size());
    if (!loaded.checksums) {
        std::printf("no checksum section\n");
        return 0;
    }
    const std::vector<std::string> bad = audit_checksums(loaded);
    for (const auto& name : bad) std::printf("checksum mismatch: %s\n", name.c_str());
    if (bad.empty()) std::printf("checksums ok\n");
    return bad.empty() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"EResFD engine: cost analysis, latency benchmarks and face detection"};
    app.require_subcommand(1);

    AnalyzeArgs analyze_args;
    auto* analyze_cmd = app.add_subcommand("analyze", "Per-node MACs, parameters and receptive fields");
    analyze_cmd->add_option("--config", analyze_args.config, "Model config JSON (default: EResFD-1x at 480x640)");
    analyze_cmd->add_option("--convention", analyze_args.convention, "FLOPs convention")
        ->check(CLI::IsMember({"macs", "2xmacs"}));
    analyze_cmd->add_option("--csv", analyze_args.csv, "Also write the per-node CSV here");

    BenchArgs bench_args;
    auto* bench_cmd = app.add_subcommand("bench", "Latency microbenchmarks");
    bench_cmd->add_option("mode", bench_args.mode, "layer (std vs dws conv), block (res vs inverted res), graph")
        ->required()
        ->check(CLI::IsMember({"layer", "block", "graph"}));
    bench_cmd->add_option("--sweep", bench_args.sweep, "<axis>=<v1,v2,...>; axis: channels, input_size, width_multiplier");
    bench_cmd->add_option("--threads", bench_args.threads, "Kernel threads")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--warmup", bench_args.warmup, "Warmup iterations")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--iters", bench_args.iters, "Measured iterations")->check(CLI::Range(3, 1 << 24));
    bench_cmd->add_option("--size", bench_args.size, "Spatial size for layer/block runs")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--channels", bench_args.channels, "Channels when not swept")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--config", bench_args.config, "Model config for graph runs");
    bench_cmd->add_option("--weights", bench_args.weights, "Weight container for graph runs (default: random)");
    bench_cmd->add_option("--seed", bench_args.seed, "Seed for random weights and inputs");
    bench_cmd->add_flag("--reference", bench_args.reference, "Use the naive reference kernels");
    bench_cmd->add_option("--csv", bench_args.csv, "CSV output file (sweeps default to stdout)");
    bench_cmd->add_option("--json", bench_args.json, "JSON output file");

    DetectArgs detect_args;
    auto* detect_cmd = app.add_subcommand("detect", "Detect faces in a PPM image or raw tensor blob");
    detect_cmd->add_option("--config", detect_args.config, "Model config JSON (default: EResFD-1x)");
    detect_cmd->add_option("--weights", detect_args.weights, "ERFD weight container")->required();
    detect_cmd->add_option("--image", detect_args.image, "P6 PPM or tensor blob")->required();
    detect_cmd->add_option("--threshold", detect_args.threshold, "Score threshold")->check(CLI::Range(0.0, 1.0));
    detect_cmd->add_flag("--flip", detect_args.flip, "Add a mirrored pass per scale");
    detect_cmd->add_option("--scales", detect_args.scales, "Comma separated test scales");
    detect_cmd->add_option("--top-k", detect_args.top_k, "Candidates kept per level");
    detect_cmd->add_flag("--json", detect_args.json, "Emit a JSON list instead of text lines");
    detect_cmd->add_option("--threads", detect_args.threads, "Kernel threads")->check(CLI::PositiveNumber);

    WeightArgs weight_args;
    auto* random_cmd = app.add_subcommand("random-weights", "Write a seeded random weight container for a config");
    random_cmd->add_option("--config", weight_args.config, "Model config JSON (default: EResFD-1x)");
    random_cmd->add_option("--out", weight_args.out, "Output file")->required();
    random_cmd->add_option("--seed", weight_args.seed, "Seed");
    random_cmd->add_flag("--checksums", weight_args.checksums, "Append the CRC-32 section");

    std::string manifest_config;
    auto* manifest_cmd = app.add_subcommand("manifest", "List the weight tensors a config expects");
    manifest_cmd->add_option("--config", manifest_config, "Model config JSON (default: EResFD-1x)");

    std::string check_path;
    auto* check_cmd = app.add_subcommand("check-weights", "Read a container and audit its checksums");
    check_cmd->add_option("file", check_path, "ERFD container")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*analyze_cmd) return run_analyze(analyze_args);
        if (*bench_cmd) return run_bench(bench_args);
        if (*detect_cmd) return run_detect(detect_args);
        if (*random_cmd) return run_random_weights(weight_args);
        if (*manifest_cmd) return run_manifest(manifest_config);
        if (*check_cmd) return run_check_weights(check_path);
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
