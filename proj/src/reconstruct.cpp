#include "docrecon/reconstruct.hpp"

#include <algorithm>
#include <limits>

#include "docrecon/error.hpp"

namespace docrecon {

GridPos offset_of(RelationLabel l) noexcept {
    switch (l) {
        case RelationLabel::Up: return {0, -1};
        case RelationLabel::Down: return {0, 1};
        case RelationLabel::Left: return {-1, 0};
        case RelationLabel::Right: return {1, 0};
        case RelationLabel::None: break;
    }
    return {0, 0};
}

namespace {

struct Incidence {
    int neighbor;
    GridPos step;
};

// Per node (by index), its directional edges in edge order, both directions.
std::vector<std::vector<Incidence>> incidence_lists(const AssemblyGraph& g) {
    std::vector<std::vector<Incidence>> adj(g.node_count());
    for (std::size_t e = 0; e < g.edge_count(); ++e) {
        const RelationLabel l = g.label(e);
        if (l == RelationLabel::None) continue;
        const GridPos d = offset_of(l);
        const int s = g.source(e), t = g.target(e);
        adj[g.node_index(s)].push_back({t, d});
        adj[g.node_index(t)].push_back({s, {-d.x, -d.y}});
    }
    return adj;
}

}  // namespace

std::vector<std::vector<int>> connected_components(const AssemblyGraph& g) {
    const auto adj = incidence_lists(g);
    std::vector<int> ids;
    for (const auto& p : g.nodes()) ids.push_back(p.node_id);
    std::sort(ids.begin(), ids.end());

    std::vector<bool> seen(g.node_count(), false);
    std::vector<std::vector<int>> components;
    for (int start : ids) {
        if (seen[g.node_index(start)]) continue;
        std::vector<int> component;
        std::vector<int> stack{start};
        seen[g.node_index(start)] = true;
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            component.push_back(u);
            for (const auto& inc : adj[g.node_index(u)]) {
                const std::size_t vi = g.node_index(inc.neighbor);
                if (!seen[vi]) {
                    seen[vi] = true;
                    stack.push_back(inc.neighbor);
                }
            }
        }
        std::sort(component.begin(), component.end());
        components.push_back(std::move(component));
    }
    return components;
}

LayoutResult layout(const AssemblyGraph& g) {
    const auto adj = incidence_lists(g);
    LayoutResult result;
    for (auto& members : connected_components(g)) {
        ComponentLayout comp;
        comp.origin = members.front();
        comp.nodes = std::move(members);
        comp.position[comp.origin] = {0, 0};
        comp.placement_order.push_back(comp.origin);

        // Explicit-stack DFS: each frame resumes its node's incidence list.
        std::vector<std::pair<int, std::size_t>> stack{{comp.origin, 0}};
        while (!stack.empty()) {
            auto& [u, next] = stack.back();
            const auto& list = adj[g.node_index(u)];
            if (next == list.size()) {
                stack.pop_back();
                continue;
            }
            const Incidence inc = list[next++];
            if (comp.position.contains(inc.neighbor)) continue;
            const GridPos here = comp.position.at(u);
            comp.position[inc.neighbor] = {here.x + inc.step.x, here.y + inc.step.y};
            comp.placement_order.push_back(inc.neighbor);
            stack.emplace_back(inc.neighbor, 0);
        }

        std::map<GridPos, std::vector<int>> occupants;
        for (int id : comp.placement_order) occupants[comp.position.at(id)].push_back(id);
        for (auto& [pos, nodes] : occupants) {
            if (nodes.size() > 1) {
                result.collisions.push_back({static_cast<int>(result.components.size()), pos, nodes});
            }
        }
        result.components.push_back(std::move(comp));
    }
    return result;
}

std::vector<Image> render(const AssemblyGraph& g, const LayoutResult& result) {
    const int P = static_cast<int>(g.patch_size());
    std::vector<Image> mosaics;
    for (const auto& comp : result.components) {
        int min_x = std::numeric_limits<int>::max(), min_y = min_x;
        int max_x = std::numeric_limits<int>::min(), max_y = max_x;
        for (const auto& [id, pos] : comp.position) {
            min_x = std::min(min_x, pos.x), max_x = std::max(max_x, pos.x);
            min_y = std::min(min_y, pos.y), max_y = std::max(max_y, pos.y);
        }
        Image mosaic((max_y - min_y + 1) * P, (max_x - min_x + 1) * P);
        // Paint in reverse placement order so the first-placed node ends up on top.
        for (auto it = comp.placement_order.rbegin(); it != comp.placement_order.rend(); ++it) {
            const GridPos pos = comp.position.at(*it);
            mosaic.paste(*g.node(*it).pixels, (pos.y - min_y) * P, (pos.x - min_x) * P);
        }
        mosaics.push_back(std::move(mosaic));
    }
    return mosaics;
}

}  // namespace docrecon
