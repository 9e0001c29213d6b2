#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "docrecon/image.hpp"

namespace docrecon {

inline constexpr int kNumClasses = 5;
inline constexpr int kDefaultPatchSize = 256;

// Placement of the target patch relative to the source patch of an edge.
enum class RelationLabel : int { Up = 0, Down = 1, Left = 2, Right = 3, None = 4 };

using LabelRow = std::array<float, kNumClasses>;

RelationLabel reverse_label(RelationLabel l) noexcept;
int class_index(RelationLabel l) noexcept;
RelationLabel label_from_index(int index);

// Single-character glyphs "U", "D", "L", "R", "_".
char label_glyph(RelationLabel l) noexcept;
RelationLabel label_from_glyph(char glyph);
const char* label_name(RelationLabel l) noexcept;

LabelRow one_hot(RelationLabel l) noexcept;

// Ties go to the lowest class index.
RelationLabel argmax_label(const LabelRow& row) noexcept;

struct Patch {
    int node_id = 0;
    std::shared_ptr<const Image> pixels;
    std::string source_tag;  // empty when unknown

    Patch() = default;
    Patch(int id, Image img, std::string tag = {});
    Patch(int id, std::shared_ptr<const Image> img, std::string tag = {});

    int size() const noexcept { return pixels ? pixels->height : 0; }
};

// Directed graph over patches. Built complete by complete_graph(); import code
// may build one from explicit edges via from_parts(), which validates the same
// invariants.
class AssemblyGraph {
public:
    AssemblyGraph() = default;

    static AssemblyGraph from_parts(std::vector<Patch> nodes, std::vector<int> sources,
                                    std::vector<int> targets, std::vector<LabelRow> edge_labels,
                                    std::optional<std::vector<RelationLabel>> predicted);

    const std::vector<Patch>& nodes() const noexcept { return nodes_; }
    std::size_t node_count() const noexcept { return nodes_.size(); }
    std::size_t edge_count() const noexcept { return sources_.size(); }

    const std::vector<int>& sources() const noexcept { return sources_; }
    const std::vector<int>& targets() const noexcept { return targets_; }
    int source(std::size_t e) const { return sources_.at(e); }
    int target(std::size_t e) const { return targets_.at(e); }

    const std::vector<LabelRow>& edge_labels() const noexcept { return edge_labels_; }
    const std::optional<std::vector<RelationLabel>>& predicted() const noexcept { return predicted_; }
    bool has_predictions() const noexcept { return predicted_.has_value(); }

    // Predicted label when available, else the argmax of the edge row.
    RelationLabel label(std::size_t e) const;

    const Patch& node(int node_id) const;
    bool has_node(int node_id) const noexcept { return index_.contains(node_id); }
    std::size_t node_index(int node_id) const;

    std::optional<std::size_t> find_edge(int source, int target) const;

    // Copies sharing node pixels.
    AssemblyGraph with_edge_labels(std::vector<LabelRow> rows) const;
    AssemblyGraph with_predictions(std::vector<LabelRow> probs, std::vector<RelationLabel> predicted) const;

    std::size_t patch_size() const noexcept { return nodes_.empty() ? 0 : nodes_.front().size(); }

private:
    void validate() const;
    void build_index();

    std::vector<Patch> nodes_;
    std::vector<int> sources_;
    std::vector<int> targets_;
    std::vector<LabelRow> edge_labels_;
    std::optional<std::vector<RelationLabel>> predicted_;
    std::unordered_map<int, std::size_t> index_;
    std::unordered_map<long long, std::size_t> edge_index_;
};

// Complete directed graph, edges in (source_id, target_id) lexicographic
// order, every edge row initialized to all ones.
AssemblyGraph complete_graph(std::vector<Patch> patches);

// Per-class edge counts in RelationLabel order (uses label(e)).
std::array<long long, kNumClasses> class_counts(const AssemblyGraph& g);

}  // namespace docrecon
