#include "docrecon/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "docrecon/error.hpp"

namespace docrecon {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::invalid_argument: return "invalid argument";
        case ErrorKind::duplicate_node: return "duplicate node";
        case ErrorKind::degenerate_graph: return "degenerate graph";
        case ErrorKind::shape_mismatch: return "shape mismatch";
        case ErrorKind::io: return "i/o error";
        case ErrorKind::malformed: return "malformed input";
        case ErrorKind::unsupported_version: return "unsupported version";
        case ErrorKind::invariant_violation: return "invariant violation";
        case ErrorKind::not_found: return "not found";
        case ErrorKind::conflict: return "conflict";
        case ErrorKind::unavailable: return "unavailable";
    }
    return "error";
}

RelationLabel reverse_label(RelationLabel l) noexcept {
    switch (l) {
        case RelationLabel::Up: return RelationLabel::Down;
        case RelationLabel::Down: return RelationLabel::Up;
        case RelationLabel::Left: return RelationLabel::Right;
        case RelationLabel::Right: return RelationLabel::Left;
        case RelationLabel::None: return RelationLabel::None;
    }
    return RelationLabel::None;
}

int class_index(RelationLabel l) noexcept { return static_cast<int>(l); }

RelationLabel label_from_index(int index) {
    if (index < 0 || index >= kNumClasses) {
        throw Error(ErrorKind::invalid_argument, "class index out of range: " + std::to_string(index));
    }
    return static_cast<RelationLabel>(index);
}

char label_glyph(RelationLabel l) noexcept {
    static constexpr char glyphs[kNumClasses] = {'U', 'D', 'L', 'R', '_'};
    return glyphs[class_index(l)];
}

RelationLabel label_from_glyph(char glyph) {
    switch (glyph) {
        case 'U': return RelationLabel::Up;
        case 'D': return RelationLabel::Down;
        case 'L': return RelationLabel::Left;
        case 'R': return RelationLabel::Right;
        case '_': return RelationLabel::None;
        default: break;
    }
    throw Error(ErrorKind::malformed, std::string("unknown label glyph '") + glyph + "'");
}

const char* label_name(RelationLabel l) noexcept {
    static constexpr const char* names[kNumClasses] = {"up", "down", "left", "right", "none"};
    return names[class_index(l)];
}

LabelRow one_hot(RelationLabel l) noexcept {
    LabelRow row{};
    row[class_index(l)] = 1.0f;
    return row;
}

RelationLabel argmax_label(const LabelRow& row) noexcept {
    int best = 0;
    for (int c = 1; c < kNumClasses; ++c) {
        if (row[c] > row[best]) best = c;
    }
    return static_cast<RelationLabel>(best);
}

Patch::Patch(int id, Image img, std::string tag)
    : node_id(id), pixels(std::make_shared<const Image>(std::move(img))), source_tag(std::move(tag)) {}

Patch::Patch(int id, std::shared_ptr<const Image> img, std::string tag)
    : node_id(id), pixels(std::move(img)), source_tag(std::move(tag)) {}

namespace {

long long edge_key(int s, int t) { return (static_cast<long long>(s) << 32) ^ static_cast<unsigned int>(t); }

bool all_ones(const LabelRow& row) {
    return std::all_of(row.begin(), row.end(), [](float v) { return v == 1.0f; });
}

}  // namespace

AssemblyGraph AssemblyGraph::from_parts(std::vector<Patch> nodes, std::vector<int> sources,
                                        std::vector<int> targets, std::vector<LabelRow> edge_labels,
                                        std::optional<std::vector<RelationLabel>> predicted) {
    AssemblyGraph g;
    g.nodes_ = std::move(nodes);
    g.sources_ = std::move(sources);
    g.targets_ = std::move(targets);
    g.edge_labels_ = std::move(edge_labels);
    g.predicted_ = std::move(predicted);
    g.build_index();
    g.validate();
    return g;
}

void AssemblyGraph::build_index() {
    index_.clear();
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (!index_.emplace(nodes_[i].node_id, i).second) {
            throw Error(ErrorKind::duplicate_node, "duplicate node " + std::to_string(nodes_[i].node_id));
        }
    }
    edge_index_.clear();
    for (std::size_t e = 0; e < sources_.size() && e < targets_.size(); ++e) {
        if (!edge_index_.emplace(edge_key(sources_[e], targets_[e]), e).second) {
            throw Error(ErrorKind::invariant_violation, "duplicate edge " + std::to_string(sources_[e]) + "->" +
                                                            std::to_string(targets_[e]));
        }
    }
}

void AssemblyGraph::validate() const {
    if (nodes_.size() < 2) throw Error(ErrorKind::degenerate_graph, "degenerate graph: fewer than 2 nodes");
    const int size = nodes_.front().size();
    for (const auto& p : nodes_) {
        if (p.node_id < 0) throw Error(ErrorKind::invariant_violation, "negative node id");
        if (!p.pixels || p.pixels->height != size || p.pixels->width != size) {
            throw Error(ErrorKind::invariant_violation, "non-uniform patch size at node " + std::to_string(p.node_id));
        }
    }
    const std::size_t e_count = sources_.size();
    if (targets_.size() != e_count || edge_labels_.size() != e_count) {
        throw Error(ErrorKind::invariant_violation, "connectivity and edge label sizes disagree");
    }
    if (predicted_ && predicted_->size() != e_count) {
        throw Error(ErrorKind::invariant_violation, "prediction vector size disagrees with edge count");
    }
    for (std::size_t e = 0; e < e_count; ++e) {
        if (sources_[e] == targets_[e]) throw Error(ErrorKind::invariant_violation, "self-loop edge");
        if (!index_.contains(sources_[e]) || !index_.contains(targets_[e])) {
            throw Error(ErrorKind::invariant_violation, "edge references unknown node");
        }
        const auto& row = edge_labels_[e];
        for (float v : row) {
            if (!std::isfinite(v) || v < 0.0f) throw Error(ErrorKind::invariant_violation, "invalid edge label value");
        }
        if (!predicted_ && all_ones(row)) continue;
        const float sum = std::accumulate(row.begin(), row.end(), 0.0f);
        if (std::fabs(sum - 1.0f) > 1e-4f) {
            throw Error(ErrorKind::invariant_violation, "edge " + std::to_string(sources_[e]) + "->" +
                                                            std::to_string(targets_[e]) + " row sums to " +
                                                            std::to_string(sum));
        }
    }
}

RelationLabel AssemblyGraph::label(std::size_t e) const {
    if (predicted_) return predicted_->at(e);
    return argmax_label(edge_labels_.at(e));
}

const Patch& AssemblyGraph::node(int node_id) const { return nodes_[node_index(node_id)]; }

std::size_t AssemblyGraph::node_index(int node_id) const {
    auto it = index_.find(node_id);
    if (it == index_.end()) throw Error(ErrorKind::not_found, "unknown node " + std::to_string(node_id));
    return it->second;
}

std::optional<std::size_t> AssemblyGraph::find_edge(int source, int target) const {
    auto it = edge_index_.find(edge_key(source, target));
    if (it == edge_index_.end()) return std::nullopt;
    return it->second;
}

AssemblyGraph AssemblyGraph::with_edge_labels(std::vector<LabelRow> rows) const {
    return from_parts(nodes_, sources_, targets_, std::move(rows), std::nullopt);
}

AssemblyGraph AssemblyGraph::with_predictions(std::vector<LabelRow> probs,
                                              std::vector<RelationLabel> predicted) const {
    return from_parts(nodes_, sources_, targets_, std::move(probs), std::move(predicted));
}

AssemblyGraph complete_graph(std::vector<Patch> patches) {
    if (patches.size() < 2) throw Error(ErrorKind::degenerate_graph, "degenerate graph: need at least 2 patches");
    std::sort(patches.begin(), patches.end(), [](const Patch& a, const Patch& b) { return a.node_id < b.node_id; });
    for (std::size_t i = 1; i < patches.size(); ++i) {
        if (patches[i].node_id == patches[i - 1].node_id) {
            throw Error(ErrorKind::duplicate_node, "duplicate node " + std::to_string(patches[i].node_id));
        }
    }
    const std::size_t n = patches.size();
    std::vector<int> sources;
    std::vector<int> targets;
    sources.reserve(n * (n - 1));
    targets.reserve(n * (n - 1));
    for (const auto& s : patches) {
        for (const auto& t : patches) {
            if (s.node_id == t.node_id) continue;
            sources.push_back(s.node_id);
            targets.push_back(t.node_id);
        }
    }
    LabelRow ones;
    ones.fill(1.0f);
    std::vector<LabelRow> rows(sources.size(), ones);
    return AssemblyGraph::from_parts(std::move(patches), std::move(sources), std::move(targets), std::move(rows),
                                     std::nullopt);
}

std::array<long long, kNumClasses> class_counts(const AssemblyGraph& g) {
    std::array<long long, kNumClasses> counts{};
    for (std::size_t e = 0; e < g.edge_count(); ++e) ++counts[class_index(g.label(e))];
    return counts;
}

}  // namespace docrecon
