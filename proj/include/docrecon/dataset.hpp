#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "docrecon/graph.hpp"
#include "docrecon/image.hpp"

namespace docrecon {

struct GridSpec {
    int image_w = 768;
    int image_h = 1280;
    int patch = kDefaultPatchSize;

    int cols() const noexcept { return patch > 0 ? image_w / patch : 0; }
    int rows() const noexcept { return patch > 0 ? image_h / patch : 0; }
    int count() const noexcept { return cols() * rows(); }

    // Throws unless both image dimensions are exact multiples of the patch size.
    void validate() const;

    static GridSpec of_grid(int rows, int cols, int patch = kDefaultPatchSize) {
        return GridSpec{cols * patch, rows * patch, patch};
    }
};

// Resizes to the grid's image size and cuts row-major patches; node ids are
// row * cols + col.
std::vector<Patch> resize_and_split(const Image& image, const GridSpec& spec, const std::string& source_tag = {});

// Inverse of splitting: places patch i at grid cell (i / cols, i % cols).
Image reassemble(const std::vector<Patch>& patches, const GridSpec& spec);

// Relation of grid cell `target` as seen from grid cell `source` (row-major ids).
RelationLabel grid_relation(int source, int target, int cols);

// Complete graph over row-major patches with one-hot grid-adjacency labels.
AssemblyGraph ground_truth_graph(std::vector<Patch> patches, const GridSpec& spec);

// Closed-form per-class edge counts for a rows x cols grid.
std::array<long long, kNumClasses> expected_class_counts(int rows, int cols);

// Seeded synthetic document images at the grid's image size (default
// 768x1280): colour gradient, smooth noise texture, fibre streaks and dark
// strokes. Image i depends only on (seed, i).
std::vector<Image> synth_corpus(int n_images, std::uint64_t seed, const GridSpec& spec = {});
Image synth_image(std::uint64_t seed, std::uint64_t index, const GridSpec& spec = {});

enum class Split { train, val, test };

const char* split_name(Split s) noexcept;
Split split_from_name(const std::string& name);

struct ManifestEntry {
    std::string path;
    Split split = Split::train;

    bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    std::uint64_t seed = 0;

    std::vector<std::string> paths(Split s) const;
    std::size_t count(Split s) const;

    bool operator==(const DatasetManifest&) const = default;
};

struct SplitRatios {
    double train = 3394.0 / 4094.0;
    double val = 500.0 / 4094.0;
    double test = 200.0 / 4094.0;
};

// Seeded shuffle then partition; val and test sizes are rounded to nearest,
// train takes the remainder.
DatasetManifest make_splits(const std::vector<std::string>& images, const SplitRatios& ratios, std::uint64_t seed);

// Patch files are named "<tag>_p<NN>.png"; the tag is the image stem.
std::string patch_filename(const std::string& tag, int node_id);
std::string tag_from_patch_stem(const std::string& stem);

// Reads every *.png in a directory in filename order; node ids are 0..n-1 in
// that order and source tags come from the file names.
std::vector<Patch> load_patch_dir(const std::filesystem::path& dir);

// Line format "<split>\t<path>"; a leading "# seed <n>" comment records the seed.
void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

}  // namespace docrecon
