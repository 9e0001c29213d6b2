#include "docrecon/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "docrecon/error.hpp"
#include "docrecon/rng.hpp"

namespace docrecon {

void GridSpec::validate() const {
    if (patch <= 0 || image_w <= 0 || image_h <= 0) {
        throw Error(ErrorKind::invalid_argument, "grid dimensions must be positive");
    }
    if (image_w % patch != 0 || image_h % patch != 0) {
        throw Error(ErrorKind::invalid_argument, "image size " + std::to_string(image_w) + "x" +
                                                     std::to_string(image_h) + " is not a multiple of patch " +
                                                     std::to_string(patch));
    }
}

std::vector<Patch> resize_and_split(const Image& image, const GridSpec& spec, const std::string& source_tag) {
    spec.validate();
    if (image.empty()) throw Error(ErrorKind::invalid_argument, "zero-sized image");
    const Image resized = resize_bilinear(image, spec.image_h, spec.image_w);
    std::vector<Patch> patches;
    patches.reserve(spec.count());
    for (int r = 0; r < spec.rows(); ++r) {
        for (int c = 0; c < spec.cols(); ++c) {
            patches.emplace_back(r * spec.cols() + c, resized.crop(r * spec.patch, c * spec.patch, spec.patch, spec.patch),
                                 source_tag);
        }
    }
    return patches;
}

Image reassemble(const std::vector<Patch>& patches, const GridSpec& spec) {
    spec.validate();
    if (static_cast<int>(patches.size()) != spec.count()) {
        throw Error(ErrorKind::invalid_argument, "patch count does not match grid");
    }
    Image out(spec.image_h, spec.image_w);
    for (const auto& p : patches) {
        if (p.node_id < 0 || p.node_id >= spec.count()) throw Error(ErrorKind::invalid_argument, "node id off grid");
        out.paste(*p.pixels, (p.node_id / spec.cols()) * spec.patch, (p.node_id % spec.cols()) * spec.patch);
    }
    return out;
}

RelationLabel grid_relation(int source, int target, int cols) {
    const int sr = source / cols, sc = source % cols;
    const int tr = target / cols, tc = target % cols;
    if (tc == sc && tr == sr - 1) return RelationLabel::Up;
    if (tc == sc && tr == sr + 1) return RelationLabel::Down;
    if (tr == sr && tc == sc - 1) return RelationLabel::Left;
    if (tr == sr && tc == sc + 1) return RelationLabel::Right;
    return RelationLabel::None;
}

AssemblyGraph ground_truth_graph(std::vector<Patch> patches, const GridSpec& spec) {
    spec.validate();
    if (static_cast<int>(patches.size()) != spec.count()) {
        throw Error(ErrorKind::invalid_argument, "expected " + std::to_string(spec.count()) + " patches, got " +
                                                     std::to_string(patches.size()));
    }
    AssemblyGraph g = complete_graph(std::move(patches));
    for (const auto& p : g.nodes()) {
        if (p.node_id >= spec.count()) throw Error(ErrorKind::invalid_argument, "node id off grid");
    }
    std::vector<LabelRow> rows(g.edge_count());
    for (std::size_t e = 0; e < g.edge_count(); ++e) {
        rows[e] = one_hot(grid_relation(g.source(e), g.target(e), spec.cols()));
    }
    return g.with_edge_labels(std::move(rows));
}

std::array<long long, kNumClasses> expected_class_counts(int rows, int cols) {
    const long long n = static_cast<long long>(rows) * cols;
    const long long vertical = static_cast<long long>(cols) * (rows - 1);
    const long long horizontal = static_cast<long long>(rows) * (cols - 1);
    return {vertical, vertical, horizontal, horizontal, n * (n - 1) - 2 * (vertical + horizontal)};
}

namespace {

// Smooth value noise: random lattice values, smoothstep-interpolated.
class ValueNoise {
public:
    ValueNoise(Rng& rng, int height, int width, double cell) : ValueNoise(rng, height, width, cell, cell) {}
    ValueNoise(Rng& rng, int height, int width, double cell_y, double cell_x) : cell_y_(cell_y), cell_x_(cell_x) {
        gh_ = static_cast<int>(height / cell_y) + 2;
        gw_ = static_cast<int>(width / cell_x) + 2;
        lattice_.resize(static_cast<size_t>(gh_) * gw_);
        for (auto& v : lattice_) v = rng.uniform(-1.0, 1.0);
    }

    double at(double y, double x) const {
        const double fy = y / cell_y_, fx = x / cell_x_;
        const int iy = static_cast<int>(fy), ix = static_cast<int>(fx);
        const double ty = smooth(fy - iy), tx = smooth(fx - ix);
        auto v = [&](int yy, int xx) { return lattice_[static_cast<size_t>(yy) * gw_ + xx]; };
        const double top = v(iy, ix) * (1 - tx) + v(iy, ix + 1) * tx;
        const double bot = v(iy + 1, ix) * (1 - tx) + v(iy + 1, ix + 1) * tx;
        return top * (1 - ty) + bot * ty;
    }

private:
    static double smooth(double t) { return t * t * (3 - 2 * t); }

    double cell_y_, cell_x_;
    int gh_ = 0, gw_ = 0;
    std::vector<double> lattice_;
};

void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
    h = h - std::floor(h);
    const double i = std::floor(h * 6);
    const double f = h * 6 - i;
    const double p = v * (1 - s), q = v * (1 - f * s), t = v * (1 - (1 - f) * s);
    switch (static_cast<int>(i) % 6) {
        case 0: rgb[0] = v, rgb[1] = t, rgb[2] = p; break;
        case 1: rgb[0] = q, rgb[1] = v, rgb[2] = p; break;
        case 2: rgb[0] = p, rgb[1] = v, rgb[2] = t; break;
        case 3: rgb[0] = p, rgb[1] = q, rgb[2] = v; break;
        case 4: rgb[0] = t, rgb[1] = p, rgb[2] = v; break;
        default: rgb[0] = v, rgb[1] = p, rgb[2] = q; break;
    }
}

}  // namespace

Image synth_image(std::uint64_t seed, std::uint64_t index, const GridSpec& spec) {
    spec.validate();
    const int H = spec.image_h, W = spec.image_w;
    Rng rng(mix_seed(seed, index));

    double base[3];
    // papyrus-like palette: tan to light brown
    const double hue = rng.uniform(0.06, 0.14);
    const double sat = rng.uniform(0.3, 0.55);
    const double val = rng.uniform(0.55, 0.78);
    hsv_to_rgb(hue, sat, val, base);
    const double angle = rng.uniform(0.0, 6.283185307179586);
    const double gdx = std::cos(angle), gdy = std::sin(angle);
    const double gamp = rng.uniform(0.08, 0.2);
    double tint[3];
    for (double& t : tint) t = rng.uniform(-0.06, 0.06);

    ValueNoise coarse(rng, H, W, rng.uniform(80.0, 140.0));
    ValueNoise medium(rng, H, W, rng.uniform(20.0, 36.0));
    ValueNoise chroma(rng, H, W, rng.uniform(40.0, 70.0));
    const double coarse_amp = rng.uniform(0.06, 0.12);
    const double medium_amp = rng.uniform(0.05, 0.09);

    // Fibre streaks: thin noise stretched along rows and along columns, shorter than a patch.
    const double fibre_width = rng.uniform(3.0, 7.0), fibre_length = rng.uniform(60.0, 120.0);
    ValueNoise row_fibre(rng, H, W, fibre_width, fibre_length);
    ValueNoise col_fibre(rng, H, W, fibre_length, fibre_width);
    const double fibre_amp = rng.uniform(0.02, 0.05);

    Image img(H, W);
    const double diag = std::sqrt(static_cast<double>(H) * H + static_cast<double>(W) * W);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const double g = gamp * ((x - W / 2.0) * gdx + (y - H / 2.0) * gdy) / diag;
            const double lum = g + coarse_amp * coarse.at(y, x) + medium_amp * medium.at(y, x) +
                               fibre_amp * (row_fibre.at(y, x) + col_fibre.at(y, x)) * 0.5;
            const double ch = chroma.at(y, x);
            for (int c = 0; c < 3; ++c) {
                img.at(y, x, c) = static_cast<float>(base[c] + lum + tint[c] * ch);
            }
        }
    }

    // Ink: short dark strokes laid out along text lines.
    const double ink = rng.uniform(0.08, 0.2);
    const double line_gap = rng.uniform(45.0, 75.0);
    for (double line_y = rng.uniform(10.0, line_gap); line_y < H - 10; line_y += line_gap * rng.uniform(0.85, 1.15)) {
        double x = rng.uniform(5.0, 60.0);
        while (x < W - 10) {
            const int strokes = 1 + static_cast<int>(rng.below(3));
            for (int s = 0; s < strokes; ++s) {
                const double len = rng.uniform(8.0, 34.0);
                const double tilt = rng.uniform(-1.2, 1.2);
                const double a = tilt + (rng.uniform() < 0.5 ? 1.5707963 : 0.0);
                const double radius = rng.uniform(1.0, 2.2);
                const double x0 = x + rng.uniform(-4.0, 4.0), y0 = line_y + rng.uniform(-12.0, 12.0);
                const int steps = static_cast<int>(len * 2);
                for (int k = 0; k <= steps; ++k) {
                    const double px = x0 + std::cos(a) * len * k / steps;
                    const double py = y0 + std::sin(a) * len * k / steps;
                    const int r = static_cast<int>(std::ceil(radius));
                    for (int dy = -r; dy <= r; ++dy) {
                        for (int dx = -r; dx <= r; ++dx) {
                            const int yy = static_cast<int>(std::lround(py)) + dy;
                            const int xx = static_cast<int>(std::lround(px)) + dx;
                            if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                            if (dx * dx + dy * dy > radius * radius + 0.5) continue;
                            for (int c = 0; c < 3; ++c) {
                                img.at(yy, xx, c) = std::min(img.at(yy, xx, c), static_cast<float>(ink * base[c] * 2));
                            }
                        }
                    }
                }
            }
            x += rng.uniform(12.0, 40.0);
            if (rng.uniform() < 0.08) x += rng.uniform(30.0, 120.0);
        }
    }

    for (float& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
    return img;
}

std::vector<Image> synth_corpus(int n_images, std::uint64_t seed, const GridSpec& spec) {
    if (n_images < 1) throw Error(ErrorKind::invalid_argument, "synth_corpus needs n >= 1");
    std::vector<Image> images;
    images.reserve(n_images);
    for (int i = 0; i < n_images; ++i) images.push_back(synth_image(seed, static_cast<std::uint64_t>(i), spec));
    return images;
}

std::string patch_filename(const std::string& tag, int node_id) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "_p%02d.png", node_id);
    return tag + buf;
}

std::string tag_from_patch_stem(const std::string& stem) {
    const auto pos = stem.rfind("_p");
    if (pos == std::string::npos || pos + 2 == stem.size()) return stem;
    for (std::size_t i = pos + 2; i < stem.size(); ++i) {
        if (stem[i] < '0' || stem[i] > '9') return stem;
    }
    return stem.substr(0, pos);
}

std::vector<Patch> load_patch_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw Error(ErrorKind::io, dir.string() + " is not a directory");
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<Patch> patches;
    for (std::size_t i = 0; i < files.size(); ++i) {
        patches.emplace_back(static_cast<int>(i), read_png(files[i]), tag_from_patch_stem(files[i].stem().string()));
    }
    return patches;
}

const char* split_name(Split s) noexcept {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    throw Error(ErrorKind::malformed, "unknown split '" + name + "'");
}

std::vector<std::string> DatasetManifest::paths(Split s) const {
    std::vector<std::string> out;
    for (const auto& e : entries) {
        if (e.split == s) out.push_back(e.path);
    }
    return out;
}

std::size_t DatasetManifest::count(Split s) const {
    return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(),
                                                  [s](const ManifestEntry& e) { return e.split == s; }));
}

DatasetManifest make_splits(const std::vector<std::string>& images, const SplitRatios& ratios, std::uint64_t seed) {
    if (images.empty()) throw Error(ErrorKind::invalid_argument, "make_splits: empty image list");
    if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
        std::fabs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-6) {
        throw Error(ErrorKind::invalid_argument, "split ratios must be non-negative and sum to 1");
    }
    std::vector<std::string> order = images;
    Rng rng(seed);
    rng.shuffle(std::span<std::string>(order));

    const double n = static_cast<double>(order.size());
    std::size_t n_val = static_cast<std::size_t>(std::llround(n * ratios.val));
    std::size_t n_test = static_cast<std::size_t>(std::llround(n * ratios.test));
    n_val = std::min(n_val, order.size());
    n_test = std::min(n_test, order.size() - n_val);
    const std::size_t n_train = order.size() - n_val - n_test;

    DatasetManifest m;
    m.seed = seed;
    for (std::size_t i = 0; i < order.size(); ++i) {
        Split s = i < n_train ? Split::train : (i < n_train + n_val ? Split::val : Split::test);
        m.entries.push_back({order[i], s});
    }
    return m;
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    out << "# seed " << m.seed << '\n';
    for (const auto& e : m.entries) out << split_name(e.split) << '\t' << e.path << '\n';
    if (!out) throw Error(ErrorKind::io, "short write to " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
    DatasetManifest m;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream hdr(line.substr(1));
            std::string key;
            if (hdr >> key && key == "seed") hdr >> m.seed;
            continue;
        }
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw Error(ErrorKind::malformed, path.string() + ":" + std::to_string(lineno) + ": expected <split>\\t<path>");
        }
        m.entries.push_back({line.substr(tab + 1), split_from_name(line.substr(0, tab))});
    }
    std::vector<std::string> seen;
    for (const auto& e : m.entries) seen.push_back(e.path);
    std::sort(seen.begin(), seen.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) {
        throw Error(ErrorKind::invariant_violation, path.string() + ": image listed more than once");
    }
    return m;
}

}  // namespace docrecon
