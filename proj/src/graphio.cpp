#include "docrecon/graphio.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "docrecon/error.hpp"

namespace docrecon {

using nlohmann::json;

double round6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return std::strtod(buf, nullptr);
}

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += kAlphabet[(v >> 6) & 63];
        out += kAlphabet[v & 63];
    }
    if (i < bytes.size()) {
        std::uint32_t v = bytes[i] << 16;
        if (i + 1 < bytes.size()) v |= bytes[i + 1] << 8;
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += i + 1 < bytes.size() ? kAlphabet[(v >> 6) & 63] : '=';
        out += '=';
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
    std::vector<std::uint8_t> out;
    std::uint32_t acc = 0;
    int bits = 0;
    for (char c : text) {
        if (c == '=') break;
        if (c == '\n' || c == '\r') continue;
        const int d = decode_char(c);
        if (d < 0) throw Error(ErrorKind::malformed, "invalid base64 character");
        acc = (acc << 6) | static_cast<std::uint32_t>(d);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xff));
        }
    }
    return out;
}

namespace {

json layout_to_json(const LayoutResult& layout) {
    json components = json::array();
    for (const auto& c : layout.components) {
        json nodes = json::array();
        for (int id : c.placement_order) {
            const GridPos p = c.position.at(id);
            nodes.push_back({{"id", id}, {"x", p.x}, {"y", p.y}});
        }
        components.push_back({{"origin", c.origin}, {"nodes", std::move(nodes)}});
    }
    json collisions = json::array();
    for (const auto& col : layout.collisions) {
        collisions.push_back(
            {{"component", col.component}, {"x", col.position.x}, {"y", col.position.y}, {"nodes", col.nodes}});
    }
    return {{"components", std::move(components)}, {"collisions", std::move(collisions)}};
}

LayoutResult layout_from_json(const json& j) {
    LayoutResult out;
    for (const auto& jc : j.at("components")) {
        ComponentLayout c;
        c.origin = jc.at("origin").get<int>();
        for (const auto& jn : jc.at("nodes")) {
            const int id = jn.at("id").get<int>();
            if (!c.position.emplace(id, GridPos{jn.at("x").get<int>(), jn.at("y").get<int>()}).second) {
                throw Error(ErrorKind::invariant_violation, "node listed twice in a layout component");
            }
            c.placement_order.push_back(id);
            c.nodes.push_back(id);
        }
        std::sort(c.nodes.begin(), c.nodes.end());
        out.components.push_back(std::move(c));
    }
    for (const auto& jc : j.at("collisions")) {
        out.collisions.push_back({jc.at("component").get<int>(), {jc.at("x").get<int>(), jc.at("y").get<int>()},
                                  jc.at("nodes").get<std::vector<int>>()});
    }
    return out;
}

}  // namespace

std::string export_graph_string(const AssemblyGraph& g, const LayoutResult* layout, const ExportOptions& options,
                                const std::filesystem::path& base_dir) {
    json nodes = json::array();
    for (const auto& p : g.nodes()) {
        json n = {{"id", p.node_id}, {"source_tag", p.source_tag}};
        switch (options.patches) {
            case ExportOptions::Patches::embed:
                n["patch_png"] = base64_encode(encode_png(*p.pixels));
                break;
            case ExportOptions::Patches::files: {
                const std::filesystem::path rel = options.files_dir / (std::to_string(p.node_id) + ".png");
                std::filesystem::create_directories(base_dir / options.files_dir);
                write_png(*p.pixels, base_dir / rel);
                n["patch_ref"] = rel.generic_string();
                break;
            }
            case ExportOptions::Patches::url:
                n["patch_ref"] = options.url_prefix + std::to_string(p.node_id) + ".png";
                break;
            case ExportOptions::Patches::none:
                break;
        }
        nodes.push_back(std::move(n));
    }

    json edges = json::array();
    for (std::size_t e = 0; e < g.edge_count(); ++e) {
        json probs = json::array();
        for (float v : g.edge_labels()[e]) probs.push_back(round6(v));
        json edge = {{"source", g.source(e)}, {"target", g.target(e)}, {"probs", std::move(probs)}};
        if (g.has_predictions()) edge["predicted"] = std::string(1, label_glyph((*g.predicted())[e]));
        edges.push_back(std::move(edge));
    }

    json doc = {{"format_version", kGraphFormatVersion},
                {"patch_size", g.patch_size()},
                {"nodes", std::move(nodes)},
                {"edges", std::move(edges)}};
    if (layout) doc["layout"] = layout_to_json(*layout);
    return doc.dump(1) + "\n";
}

void export_graph(const AssemblyGraph& g, const LayoutResult* layout, const std::filesystem::path& path,
                  const ExportOptions& options) {
    const std::string text = export_graph_string(g, layout, options, path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorKind::io, "short write to " + path.string());
}

ImportedGraph import_graph_string(const std::string& text, const std::filesystem::path& base_dir) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::malformed, std::string("graph file is not valid JSON: ") + e.what());
    }
    try {
        if (!doc.is_object() || !doc.contains("format_version")) {
            throw Error(ErrorKind::malformed, "graph file lacks format_version");
        }
        const int version = doc.at("format_version").get<int>();
        if (version != kGraphFormatVersion) {
            throw Error(ErrorKind::unsupported_version, "unsupported graph format version " + std::to_string(version));
        }

        std::vector<Patch> nodes;
        for (const auto& jn : doc.at("nodes")) {
            Image pixels;
            if (jn.contains("patch_png")) {
                pixels = decode_png(base64_decode(jn.at("patch_png").get<std::string>()));
            } else if (jn.contains("patch_ref")) {
                pixels = read_png(base_dir / jn.at("patch_ref").get<std::string>());
            } else {
                throw Error(ErrorKind::malformed, "node without patch pixels");
            }
            nodes.emplace_back(jn.at("id").get<int>(), std::move(pixels), jn.value("source_tag", std::string{}));
        }

        std::vector<int> sources, targets;
        std::vector<LabelRow> rows;
        std::vector<RelationLabel> predicted;
        bool any_predicted = false, all_predicted = true;
        for (const auto& je : doc.at("edges")) {
            sources.push_back(je.at("source").get<int>());
            targets.push_back(je.at("target").get<int>());
            const auto probs = je.at("probs").get<std::vector<float>>();
            if (probs.size() != kNumClasses) throw Error(ErrorKind::malformed, "edge probs must have 5 entries");
            LabelRow row;
            std::copy(probs.begin(), probs.end(), row.begin());
            rows.push_back(row);
            if (je.contains("predicted")) {
                const std::string glyph = je.at("predicted").get<std::string>();
                if (glyph.size() != 1) throw Error(ErrorKind::malformed, "predicted must be one glyph");
                predicted.push_back(label_from_glyph(glyph[0]));
                any_predicted = true;
            } else {
                all_predicted = false;
            }
        }
        if (any_predicted && !all_predicted) {
            throw Error(ErrorKind::malformed, "either every edge or no edge carries a prediction");
        }

        ImportedGraph out{AssemblyGraph::from_parts(std::move(nodes), std::move(sources), std::move(targets),
                                                    std::move(rows),
                                                    any_predicted ? std::optional(std::move(predicted)) : std::nullopt),
                          std::nullopt};
        if (doc.contains("layout")) out.layout = layout_from_json(doc.at("layout"));
        return out;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::malformed, std::string("graph file schema error: ") + e.what());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::duplicate_node || e.kind() == ErrorKind::degenerate_graph) {
            throw Error(ErrorKind::invariant_violation, e.what());
        }
        throw;
    }
}

ImportedGraph import_graph(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return import_graph_string(ss.str(), path.parent_path());
}

}  // namespace docrecon
