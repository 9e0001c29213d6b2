#pragma once

#include <cstddef>
#include <utility>

#include "docrecon/graph.hpp"
#include "docrecon/pairnet.hpp"
#include "docrecon/tensor.hpp"

namespace docrecon {

inline constexpr std::size_t kDefaultInferChunk = 32;

// Per-edge source and target pixel stacks, [E, P, P, 3], in edge order.
std::pair<Tensor<float>, Tensor<float>> gather_pairs(const AssemblyGraph& g);

// Builds the [n, 320, 256, 3] junction batch for edges [first, first + n).
Tensor<float> junction_batch(const AssemblyGraph& g, std::span<const std::size_t> edges);

// Runs the pairwise network over every edge with eval-mode batch norm.
// chunk = 0 evaluates all edges in one batch; any chunk size gives
// bit-identical output. Nodes and connectivity are carried over unchanged.
AssemblyGraph infer(const AssemblyGraph& g, PairNet<float>& net, std::size_t chunk = kDefaultInferChunk);
AssemblyGraph infer(const AssemblyGraph& g, const ModelParams<float>& params, std::size_t chunk = kDefaultInferChunk);

// Relabels as None every edge whose predicted class is None or whose
// predicted-class probability is below tau. Probabilities are kept.
AssemblyGraph filter_edges(const AssemblyGraph& g, double tau);

}  // namespace docrecon
