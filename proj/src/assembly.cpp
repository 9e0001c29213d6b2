#include "docrecon/assembly.hpp"

#include <algorithm>
#include <numeric>

#include "docrecon/error.hpp"

namespace docrecon {

std::pair<Tensor<float>, Tensor<float>> gather_pairs(const AssemblyGraph& g) {
    const int E = static_cast<int>(g.edge_count());
    const int P = static_cast<int>(g.patch_size());
    Tensor<float> sources({E, P, P, 3});
    Tensor<float> targets({E, P, P, 3});
    const std::size_t block = static_cast<std::size_t>(P) * P * 3;
    for (int e = 0; e < E; ++e) {
        if (!g.has_node(g.source(e)) || !g.has_node(g.target(e))) {
            throw Error(ErrorKind::invariant_violation, "edge references unknown node");
        }
        const auto& s = g.node(g.source(e)).pixels->data;
        const auto& t = g.node(g.target(e)).pixels->data;
        std::copy(s.begin(), s.end(), sources.ptr() + e * block);
        std::copy(t.begin(), t.end(), targets.ptr() + e * block);
    }
    return {std::move(sources), std::move(targets)};
}

Tensor<float> junction_batch(const AssemblyGraph& g, std::span<const std::size_t> edges) {
    const int n = static_cast<int>(edges.size());
    Tensor<float> batch({n, kJunctionRows, kDefaultPatchSize, 3});
    const std::size_t stride = static_cast<std::size_t>(kJunctionRows) * kDefaultPatchSize * 3;
    for (int i = 0; i < n; ++i) {
        const std::size_t e = edges[i];
        assemble_junctions_into(g.node(g.source(e)), g.node(g.target(e)),
                                std::span<float>(batch.ptr() + i * stride, stride));
    }
    return batch;
}

AssemblyGraph infer(const AssemblyGraph& g, PairNet<float>& net, std::size_t chunk) {
    const NetConfig& cfg = net.params().config;
    if (cfg.input_h != kJunctionRows || cfg.input_w != kDefaultPatchSize || cfg.input_c != 3) {
        throw Error(ErrorKind::shape_mismatch, "model input shape " +
                                                   shape_string({cfg.input_h, cfg.input_w, cfg.input_c}) +
                                                   " does not match junction tensors");
    }
    const std::size_t E = g.edge_count();
    if (chunk == 0) chunk = E;
    std::vector<LabelRow> probs(E);
    std::vector<RelationLabel> predicted(E);
    std::vector<std::size_t> ids(E);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    for (std::size_t first = 0; first < E; first += chunk) {
        const std::size_t n = std::min(chunk, E - first);
        const Tensor<float> batch = junction_batch(g, std::span<const std::size_t>(ids).subspan(first, n));
        const Tensor<float> p = net.forward(batch, Mode::eval);
        for (std::size_t i = 0; i < n; ++i) {
            std::copy_n(p.ptr() + i * kNumClasses, kNumClasses, probs[first + i].begin());
            predicted[first + i] = argmax_label(probs[first + i]);
        }
    }
    return g.with_predictions(std::move(probs), std::move(predicted));
}

AssemblyGraph infer(const AssemblyGraph& g, const ModelParams<float>& params, std::size_t chunk) {
    PairNet<float> net(params);
    return infer(g, net, chunk);
}

AssemblyGraph filter_edges(const AssemblyGraph& g, double tau) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw Error(ErrorKind::invalid_argument, "threshold must lie in [0,1]");
    if (!g.has_predictions()) throw Error(ErrorKind::invalid_argument, "filter_edges needs a graph with predictions");
    std::vector<RelationLabel> labels = *g.predicted();
    for (std::size_t e = 0; e < labels.size(); ++e) {
        if (labels[e] == RelationLabel::None) continue;
        if (g.edge_labels()[e][class_index(labels[e])] < tau) labels[e] = RelationLabel::None;
    }
    return g.with_predictions(g.edge_labels(), std::move(labels));
}

}  // namespace docrecon
