#pragma once

#include <map>
#include <utility>
#include <vector>

#include "docrecon/graph.hpp"
#include "docrecon/image.hpp"

namespace docrecon {

struct GridPos {
    int x = 0;
    int y = 0;

    auto operator<=>(const GridPos&) const = default;
};

// Screen convention, y grows downward.
GridPos offset_of(RelationLabel l) noexcept;

struct ComponentLayout {
    int origin = 0;                  // lowest node id, placed at (0,0)
    std::vector<int> nodes;          // ascending ids
    std::map<int, GridPos> position;
    std::vector<int> placement_order;  // order of first assignment
};

struct Collision {
    int component = 0;
    GridPos position;
    std::vector<int> nodes;  // in placement order; nodes.front() is rendered

    bool operator==(const Collision&) const = default;
};

struct LayoutResult {
    std::vector<ComponentLayout> components;
    std::vector<Collision> collisions;
};

// Weakly connected components over directional (non-None) edges, each sorted,
// ordered by smallest member; isolated nodes are singletons.
std::vector<std::vector<int>> connected_components(const AssemblyGraph& g);

// DFS placement per component from its lowest node id. Edges are visited in
// graph edge order in both directions (reverse traversal applies the inverse
// offset); the first assignment of a node wins.
LayoutResult layout(const AssemblyGraph& g);

// One mosaic per component, translated so the minimum coordinate is (0,0);
// empty slots are black, colliding slots show the first-placed node.
std::vector<Image> render(const AssemblyGraph& g, const LayoutResult& result);

}  // namespace docrecon
