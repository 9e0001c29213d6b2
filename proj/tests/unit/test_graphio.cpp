#include <doctest.h>

#include <fstream>
#include <json.hpp>

#include "docrecon/error.hpp"
#include "docrecon/graphio.hpp"
#include "docrecon/reconstruct.hpp"
#include "helpers.hpp"

using namespace docrecon;
using nlohmann::json;

namespace {

// 15-node graph with 8-bit pixels and non-trivial probability rows.
AssemblyGraph sample_graph() {
    std::vector<Patch> patches;
    for (int i = 0; i < 15; ++i) patches.emplace_back(i, quantize8(testutil::random_image(8, 8, i)), i < 8 ? "a" : "b");
    const auto g = complete_graph(patches);
    Rng rng(4);
    std::vector<LabelRow> rows;
    std::vector<RelationLabel> pred;
    for (std::size_t e = 0; e < g.edge_count(); ++e) {
        LabelRow r;
        double s = 0;
        for (auto& v : r) s += v = static_cast<float>(rng.uniform(0.01, 1));
        for (auto& v : r) v = static_cast<float>(v / s);
        rows.push_back(r);
        pred.push_back(argmax_label(r));
    }
    return g.with_predictions(rows, pred);
}

ErrorKind import_kind(const std::string& text) {
    try {
        import_graph_string(text);
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::conflict;
}

std::string two_node_doc(const std::string& edges) {
    const std::string png = base64_encode(encode_png(Image(4, 4, 0.5f)));
    return R"({"format_version":1,"patch_size":4,"nodes":[{"id":0,"source_tag":"x","patch_png":")" + png +
           R"("},{"id":1,"source_tag":"x","patch_png":")" + png + R"("}],"edges":)" + edges + "}";
}

}  // namespace

TEST_CASE("round6 and base64") {
    CHECK(round6(0.123456789) == 0.123457);
    CHECK(round6(123456789.0) == 123457000.0);
    const std::vector<std::uint8_t> bytes = {0, 1, 2, 250, 255, 17, 99};
    CHECK(base64_encode(bytes) == "AAEC+v8RYw==");
    for (std::size_t n = 0; n <= bytes.size(); ++n) {
        const std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + n);
        CHECK(base64_decode(base64_encode(part)) == part);
    }
    CHECK_THROWS_AS(base64_decode("@@@@"), Error);
}

TEST_CASE("export writes the documented schema") {
    const auto g = sample_graph();
    const auto text = export_graph_string(g);
    const json doc = json::parse(text);
    CHECK(doc["format_version"] == 1);
    CHECK(doc["nodes"].size() == 15);
    CHECK(doc["edges"].size() == 210);
    const auto& e0 = doc["edges"][0];
    CHECK(e0["source"] == 0);
    CHECK(e0["target"] == 1);
    CHECK(e0["probs"].size() == 5);
    CHECK(std::string("UDLR_").find(e0["predicted"].get<std::string>()) != std::string::npos);
    CHECK(doc["nodes"][9]["source_tag"] == "b");
    CHECK(doc["nodes"][0].contains("patch_png"));
    CHECK_FALSE(doc.contains("layout"));
    // keys sorted
    CHECK(text.find("\"edges\"") < text.find("\"format_version\""));
    CHECK(text.find("\"format_version\"") < text.find("\"nodes\""));
}

TEST_CASE("export is byte-deterministic and import inverts it") {
    const auto g = sample_graph();
    const auto res = layout(g);
    const auto text = export_graph_string(g, &res);
    CHECK(export_graph_string(g, &res) == text);
    const auto back = import_graph_string(text);
    CHECK(back.graph.sources() == g.sources());
    CHECK(back.graph.targets() == g.targets());
    CHECK(*back.graph.predicted() == *g.predicted());
    for (std::size_t e = 0; e < g.edge_count(); ++e)
        for (int k = 0; k < 5; ++k)
            REQUIRE(back.graph.edge_labels()[e][k] == static_cast<float>(round6(g.edge_labels()[e][k])));
    for (int i = 0; i < 15; ++i) {
        CHECK(*back.graph.node(i).pixels == *g.node(i).pixels);
        CHECK(back.graph.node(i).source_tag == g.node(i).source_tag);
    }
    REQUIRE(back.layout.has_value());
    CHECK(back.layout->collisions == res.collisions);
    REQUIRE(back.layout->components.size() == res.components.size());
    for (std::size_t c = 0; c < res.components.size(); ++c) {
        CHECK(back.layout->components[c].position == res.components[c].position);
        CHECK(back.layout->components[c].placement_order == res.components[c].placement_order);
    }
    CHECK(export_graph_string(back.graph, &*back.layout) == text);
}

TEST_CASE("graphs without predictions round trip") {
    std::vector<Patch> patches;
    for (int i = 0; i < 3; ++i) patches.emplace_back(i, quantize8(testutil::random_image(4, 4, i)), "g");
    const auto g = complete_graph(patches);
    const auto back = import_graph_string(export_graph_string(g)).graph;
    CHECK_FALSE(back.has_predictions());
    CHECK(back.edge_labels() == g.edge_labels());
}

TEST_CASE("patch files are written next to the document") {
    testutil::TempDir dir("graphio");
    const auto g = sample_graph();
    ExportOptions opts;
    opts.patches = ExportOptions::Patches::files;
    opts.files_dir = "px";
    export_graph(g, nullptr, dir.path / "g.json", opts);
    CHECK(std::filesystem::exists(dir.path / "px"));
    const auto back = import_graph(dir.path / "g.json");
    CHECK(*back.graph.node(3).pixels == *g.node(3).pixels);
    std::ifstream in(dir.path / "g.json");
    const json doc = json::parse(in);
    CHECK(doc["nodes"][0].contains("patch_ref"));
    CHECK_THROWS_AS(export_graph(g, nullptr, dir.path / "no" / "such" / "dir" / "g.json"), Error);
}

TEST_CASE("import errors have distinct kinds") {
    const std::string row = R"({"source":0,"target":1,"probs":[1,0,0,0,0],"predicted":"U"})";
    CHECK(import_kind(two_node_doc("[" + row + "]")) == ErrorKind::conflict);  // valid
    CHECK(import_kind("{not json") == ErrorKind::malformed);
    CHECK(import_kind(R"({"format_version":2,"nodes":[],"edges":[]})") == ErrorKind::unsupported_version);
    CHECK(import_kind(two_node_doc("[" + row + "," + row + "]")) == ErrorKind::invariant_violation);
    CHECK(import_kind(two_node_doc(R"([{"source":0,"target":1,"probs":[0.1,0.1,0.1,0.1,0.1],"predicted":"U"}])")) ==
          ErrorKind::invariant_violation);
    CHECK(import_kind(two_node_doc(R"([{"source":0,"target":1,"probs":[1,0,0,0,0],"predicted":"Q"}])")) ==
          ErrorKind::malformed);
    CHECK(import_kind(two_node_doc(R"([{"source":0,"target":1}])")) == ErrorKind::malformed);
    CHECK_THROWS_AS(import_graph("/nonexistent/graph.json"), Error);
}

TEST_CASE("the versioned example document imports") {
    const auto path = std::filesystem::path(DOCRECON_SOURCE_DIR) / "docs" / "examples" / "graph-v1.json";
    const auto imported = import_graph(path);
    CHECK(imported.graph.node_count() == 4);
    CHECK(imported.graph.edge_count() == 12);
    REQUIRE(imported.layout.has_value());
    CHECK(export_graph_string(imported.graph, &*imported.layout, {}, path.parent_path()) ==
          [&] {
              std::ifstream in(path);
              return std::string(std::istreambuf_iterator<char>(in), {});
          }());
}
