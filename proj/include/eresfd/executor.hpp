// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "eresfd/graph.hpp"
#include "eresfd/kernels.hpp"
#include "eresfd/weights.hpp"

namespace eresfd {

/// A graph with its weights resolved once, ready for repeated evaluation.
/// Execution is sequential in node order; only the kernels themselves use
/// threads (KernelOptions::threads).
class Executor {
public:
    /// Throws GraphError naming the node if a weight is missing or mis-shaped.
    Executor(ModelGraph graph, const WeightStore& weights, KernelOptions opts = {});

    std::map<std::string, Tensor> run(const Tensor& input) const;

    /// Output of every node, indexed like graph().nodes().
    std::vector<Tensor> run_trace(const Tensor& input) const;

    /// Evaluates node `index` on explicit inputs (one per node input).
    Tensor run_node(std::size_t index, std::span<const Tensor* const> inputs) const;

    const ModelGraph& graph() const { return graph_; }
    const KernelOptions& options() const { return opts_; }

private:
    struct Bound {
        ConvWeights conv;
        std::vector<float> fusion;
    };

    void check_input(const Tensor& input) const;
    std::vector<Tensor> execute(const Tensor& input, bool keep_all) const;

    ModelGraph graph_;
    KernelOptions opts_;
    std::vector<Bound> bound_;
    std::vector<std::vector<std::size_t>> input_slots_;  // node index + 1; 0 is the graph input
    std::vector<std::size_t> last_use_;
};

std::map<std::string, Tensor> forward(const ModelGraph& graph, const WeightStore& weights, const Tensor& input,
                                      const KernelOptions& opts = {});

}  // namespace eresfd
