// SPDX-License-Identifier: Apache-2.0

#include "eresfd/executor.hpp"

#include <algorithm>

namespace eresfd {

Executor::Executor(ModelGraph graph, const WeightStore& weights, KernelOptions opts)
    : graph_(std::move(graph)), opts_(opts) {
    const auto& nodes = graph_.nodes();
    bound_.resize(nodes.size());
    input_slots_.resize(nodes.size());
    last_use_.assign(nodes.size() + 1, 0);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const LayerNode& node = nodes[i];
        try {
            if (node.is_weighted()) {
                bound_[i].conv = conv_weights_from_store(weights, node);
            } else if (node.kind == LayerKind::kWeightedFusion) {
                if (node.weight_names.size() != node.inputs.size()) {
                    throw std::invalid_argument("fusion needs one weight per input");
                }
                for (const auto& name : node.weight_names) {
                    const WeightTensor& w = weights.at(name);
                    if (w.values.size() != 1) throw std::invalid_argument("fusion weight '" + name + "' is not a scalar");
                    bound_[i].fusion.push_back(w.values[0]);
                }
            }
        } catch (const std::exception& e) {
            throw GraphError("node '" + node.id + "': " + e.what());
        }
        for (const auto& in : node.inputs) {
            const std::size_t slot = in == ModelGraph::kInput ? 0 : graph_.index_of(in) + 1;
            input_slots_[i].push_back(slot);
            last_use_[slot] = std::max(last_use_[slot], i + 1);
        }
    }
    // Outputs must survive to the end.
    for (const auto& [name, id] : graph_.outputs()) {
        const std::size_t slot = id == ModelGraph::kInput ? 0 : graph_.index_of(id) + 1;
        last_use_[slot] = nodes.size() + 1;
    }
}

void Executor::check_input(const Tensor& input) const {
    const Shape& want = graph_.input_spec();
    const Shape& got = input.shape();
    if (got.c != want.c || (want.h > 0 && got.h != want.h) || (want.w > 0 && got.w != want.w) || got.n < 1) {
        throw GraphError("input shape " + got.str() + " does not match graph input " + want.str());
    }
}

Tensor Executor::run_node(std::size_t index, std::span<const Tensor* const> in) const {
    const LayerNode& node = graph_.nodes().at(index);
    if (in.size() != node.inputs.size()) {
        throw GraphError("node '" + node.id + "': expected " + std::to_string(node.inputs.size()) + " inputs");
    }
    try {
        switch (node.kind) {
            case LayerKind::kConv:
                return conv2d(*in[0], node.conv(), bound_[index].conv, opts_);
            case LayerKind::kDepthwiseConv:
                return depthwise_conv2d(*in[0], node.conv(), bound_[index].conv, opts_);
            case LayerKind::kRelu:
                return relu(*in[0]);
            case LayerKind::kMaxPool:
                return maxpool2d(*in[0], std::get<PoolSpec>(node.spec), opts_);
            case LayerKind::kUpsample: {
                Tensor up = upsample_nearest2x(*in[0]);
                if (in.size() > 1) up = crop_spatial(up, in[1]->shape().h, in[1]->shape().w);
                return up;
            }
            case LayerKind::kAdd:
                return elementwise_add(*in[0], *in[1]);
            case LayerKind::kWeightedFusion: {
                std::vector<Tensor> xs;
                xs.reserve(in.size());
                for (const Tensor* t : in) xs.push_back(*t);
                return weighted_fusion(xs, bound_[index].fusion, std::get<FusionSpec>(node.spec).epsilon);
            }
            case LayerKind::kConcat: {
                std::vector<Tensor> xs;
                xs.reserve(in.size());
                for (const Tensor* t : in) xs.push_back(*t);
                return concat_channels(xs);
            }
            case LayerKind::kSoftmax:
                return softmax_channels(*in[0], std::get<SoftmaxSpec>(node.spec).group);
            case LayerKind::kMaxOut:
                return maxout_background(*in[0], std::get<MaxOutSpec>(node.spec).background_channels);
        }
    } catch (const GraphError&) {
        throw;
    } catch (const std::exception& e) {
        throw GraphError("node '" + node.id + "': " + e.what());
    }
    throw GraphError("node '" + node.id + "': unsupported kind");
}

std::vector<Tensor> Executor::execute(const Tensor& input, bool keep_all) const {
    check_input(input);
    const auto& nodes = graph_.nodes();
    std::vector<Tensor> values(nodes.size() + 1);
    values[0] = input;
    std::vector<const Tensor*> args;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        args.clear();
        for (std::size_t slot : input_slots_[i]) args.push_back(&values[slot]);
        values[i + 1] = run_node(i, args);
        if (!keep_all) {
            for (std::size_t slot : input_slots_[i]) {
                if (last_use_[slot] == i + 1) values[slot] = Tensor();
            }
        }
    }
    return values;
}

std::map<std::string, Tensor> Executor::run(const Tensor& input) const {
    std::vector<Tensor> values = execute(input, false);
    std::map<std::string, Tensor> out;
    for (const auto& [name, id] : graph_.outputs()) {
        const std::size_t slot = id == ModelGraph::kInput ? 0 : graph_.index_of(id) + 1;
        out.emplace(name, values[slot]);
    }
    return out;
}

std::vector<Tensor> Executor::run_trace(const Tensor& input) const {
    std::vector<Tensor> values = execute(input, true);
    values.erase(values.begin());
    return values;
}

std::map<std::string, Tensor> forward(const ModelGraph& graph, const WeightStore& weights, const Tensor& input,
                                      const KernelOptions& opts) {
    return Executor(graph, weights, opts).run(input);
}

}  // namespace eresfd
