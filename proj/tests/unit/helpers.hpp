#pragma once

#include <filesystem>
#include <map>
#include <random>
#include <string>

#include "docrecon/dataset.hpp"
#include "docrecon/graph.hpp"
#include "docrecon/image.hpp"
#include "docrecon/rng.hpp"

namespace testutil {

inline docrecon::Image random_image(int h, int w, std::uint64_t seed) {
    docrecon::Rng rng(seed);
    docrecon::Image img(h, w);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform());
    return img;
}

inline docrecon::Patch random_patch(int id, std::uint64_t seed, int size = docrecon::kDefaultPatchSize,
                                    const std::string& tag = "t") {
    return docrecon::Patch(id, random_image(size, size, seed), tag);
}

inline docrecon::Patch constant_patch(int id, float c, int size = docrecon::kDefaultPatchSize) {
    return docrecon::Patch(id, docrecon::Image(size, size, c), "c");
}

// Complete graph whose edges carry the given one-hot predictions.
inline docrecon::AssemblyGraph predicted_graph(int n, const std::map<std::pair<int, int>, docrecon::RelationLabel>& dir,
                                               float prob = 0.9f, int size = 4) {
    std::vector<docrecon::Patch> patches;
    for (int i = 0; i < n; ++i) patches.push_back(random_patch(i, 1000 + i, size));
    auto g = docrecon::complete_graph(std::move(patches));
    std::vector<docrecon::LabelRow> rows;
    std::vector<docrecon::RelationLabel> pred;
    for (std::size_t e = 0; e < g.edge_count(); ++e) {
        auto it = dir.find({g.source(e), g.target(e)});
        const auto l = it == dir.end() ? docrecon::RelationLabel::None : it->second;
        docrecon::LabelRow row{};
        const int c = docrecon::class_index(l);
        for (int k = 0; k < docrecon::kNumClasses; ++k) row[k] = k == c ? prob : (1.0f - prob) / 4;
        rows.push_back(row);
        pred.push_back(l);
    }
    return g.with_predictions(std::move(rows), std::move(pred));
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name) {
        std::random_device rd;
        path = std::filesystem::temp_directory_path() / (name + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

}  // namespace testutil
