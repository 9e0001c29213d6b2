#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "docrecon/graph.hpp"
#include "docrecon/reconstruct.hpp"

namespace docrecon {

inline constexpr int kGraphFormatVersion = 1;

struct ExportOptions {
    enum class Patches {
        embed,  // "patch_png": base64 PNG
        files,  // "patch_ref": PNG written under files_dir, path relative to the document
        url,    // "patch_ref": url_prefix + "<id>.png", nothing written
        none,   // no pixel reference at all
    };
    Patches patches = Patches::embed;
    std::filesystem::path files_dir = "patches";
    std::string url_prefix;
};

struct ImportedGraph {
    AssemblyGraph graph;
    std::optional<LayoutResult> layout;
};

// JSON document with sorted keys and floats rounded to 6 significant digits;
// byte-deterministic for a given graph. Schema in docs/graph-format.md.
std::string export_graph_string(const AssemblyGraph& g, const LayoutResult* layout = nullptr,
                                const ExportOptions& options = {}, const std::filesystem::path& base_dir = {});
void export_graph(const AssemblyGraph& g, const LayoutResult* layout, const std::filesystem::path& path,
                  const ExportOptions& options = {});

// Relative patch_ref paths resolve against base_dir. Throws Error with kind
// malformed, unsupported_version, or invariant_violation.
ImportedGraph import_graph_string(const std::string& text, const std::filesystem::path& base_dir = {});
ImportedGraph import_graph(const std::filesystem::path& path);

// Rounds to 6 significant digits, as written by export.
double round6(double v);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace docrecon
