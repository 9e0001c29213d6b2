#include <doctest.h>

#include "docrecon/error.hpp"
#include "docrecon/pairnet.hpp"
#include "helpers.hpp"

using namespace docrecon;

namespace {

// Patch whose red channel encodes the row, green the column.
Patch coordinate_patch(int id, float blue) {
    Image img(256, 256);
    for (int y = 0; y < 256; ++y)
        for (int x = 0; x < 256; ++x) {
            img.at(y, x, 0) = static_cast<float>(y);
            img.at(y, x, 1) = static_cast<float>(x);
            img.at(y, x, 2) = blue;
        }
    return Patch(id, std::move(img), "coords");
}

// Oracle for one junction pixel, written straight from the block layout.
float expected_junction(const Image& s, const Image& t, int row, int col, int ch) {
    const int block = row / 80, r = row % 80;
    switch (block) {
        case 0: return r < 40 ? t.at(216 + r, col, ch) : s.at(r - 40, col, ch);
        case 1: return r < 40 ? s.at(216 + r, col, ch) : t.at(r - 40, col, ch);
        case 2: return r < 40 ? t.at(255 - col, 216 + r, ch) : s.at(255 - col, r - 40, ch);
        default: return r < 40 ? s.at(255 - col, 216 + r, ch) : t.at(255 - col, r - 40, ch);
    }
}

}  // namespace

TEST_CASE("stripes are the 40-pixel borders") {
    const auto p = coordinate_patch(0, 0);
    const auto st = extract_stripes(p);
    CHECK(st.up.height == 40);
    CHECK(st.up.width == 256);
    CHECK(st.left.height == 256);
    CHECK(st.left.width == 40);
    for (int y = 0; y < 40; ++y) {
        CHECK(st.up.at(y, 17, 0) == y);
        CHECK(st.down.at(y, 17, 0) == 216 + y);
        CHECK(st.left.at(100, y, 1) == y);
        CHECK(st.right.at(100, y, 1) == 216 + y);
    }
    const auto c = extract_stripes(testutil::constant_patch(1, 0.3f));
    for (float v : c.right.data) REQUIRE(v == 0.3f);
    CHECK_THROWS_AS(extract_stripes(testutil::random_patch(2, 2, 100)), Error);
}

TEST_CASE("junction tensor layout matches the block oracle") {
    const auto s = testutil::random_patch(0, 11);
    const auto t = testutil::random_patch(1, 12);
    const auto j = assemble_junctions(s, t);
    REQUIRE(j.shape == std::vector<int>{320, 256, 3});
    for (int row = 0; row < 320; ++row)
        for (int col = 0; col < 256; ++col)
            for (int ch = 0; ch < 3; ++ch)
                REQUIRE(j.data[(static_cast<size_t>(row) * 256 + col) * 3 + ch] ==
                        expected_junction(*s.pixels, *t.pixels, row, col, ch));
}

TEST_CASE("junction seams sit between rows 39 and 40 of each block") {
    const auto s = coordinate_patch(0, 0.0f);
    const auto t = coordinate_patch(1, 1.0f);
    const auto j = assemble_junctions(s, t);
    auto px = [&](int r, int c, int ch) { return j.data[(static_cast<size_t>(r) * 256 + c) * 3 + ch]; };
    // block 0: target.down (blue 1) then source.up (blue 0)
    CHECK(px(39, 5, 2) == 1.0f);
    CHECK(px(40, 5, 2) == 0.0f);
    CHECK(px(39, 5, 0) == 255.0f);
    CHECK(px(40, 5, 0) == 0.0f);
    // block 1: source.down then target.up
    CHECK(px(119, 5, 2) == 0.0f);
    CHECK(px(120, 5, 2) == 1.0f);
    // block 2: target right edge column 255 next to source column 0
    CHECK(px(199, 5, 2) == 1.0f);
    CHECK(px(199, 5, 1) == 255.0f);
    CHECK(px(200, 5, 1) == 0.0f);
    // block 3: source right edge then target left edge
    CHECK(px(279, 5, 2) == 0.0f);
    CHECK(px(280, 5, 2) == 1.0f);
}

TEST_CASE("interior pixels never reach the junction tensor") {
    const auto s = testutil::random_patch(0, 21);
    const auto t = testutil::random_patch(1, 22);
    Image poisoned = *s.pixels;
    for (int y = 40; y < 216; ++y)
        for (int x = 40; x < 216; ++x)
            for (int c = 0; c < 3; ++c) poisoned.at(y, x, c) = -99.0f;
    const Patch s2(0, poisoned, "t");
    CHECK(assemble_junctions(s, t) == assemble_junctions(s2, t));
    CHECK(assemble_junctions(t, s) == assemble_junctions(t, s2));
}

TEST_CASE("junctions are asymmetric and preserve constants") {
    const auto a = testutil::random_patch(0, 31);
    const auto b = testutil::random_patch(1, 32);
    CHECK_FALSE(assemble_junctions(a, b) == assemble_junctions(b, a));
    const auto c = assemble_junctions(testutil::constant_patch(0, 0.4f), testutil::constant_patch(1, 0.4f));
    for (float v : c.data) REQUIRE(v == 0.4f);
    CHECK_THROWS_AS(assemble_junctions(a, testutil::random_patch(1, 3, 128)), Error);
}

TEST_CASE("network parameter shapes") {
    const auto p = ModelParams<float>::init(NetConfig{}, 1);
    CHECK(p.conv1.weight.value.shape == std::vector<int>{3, 3, 3, 4});
    CHECK(p.conv2.weight.value.shape == std::vector<int>{3, 3, 4, 4});
    CHECK(NetConfig{}.flat_size() == 19344);
    REQUIRE(p.dense.size() == 4);
    const int chain[] = {19344, 512, 128, 32, 5};
    for (int i = 0; i < 4; ++i) CHECK(p.dense[i].weight.value.shape == std::vector<int>{chain[i], chain[i + 1]});
    CHECK(p.parameter_count() == 6 + 112 + 8 + 148 + 8 + 19344 * 512 + 512 + 512 * 128 + 128 + 128 * 32 + 32 + 32 * 5 + 5);
    CHECK(ModelParams<float>::init(NetConfig{}, 1).dense[0].weight.value == p.dense[0].weight.value);
    CHECK_FALSE(ModelParams<float>::init(NetConfig{}, 2).dense[0].weight.value == p.dense[0].weight.value);
}

TEST_CASE("forward shape trace and normalized output") {
    PairNet<float> net(ModelParams<float>::init(NetConfig{}, 3));
    const auto probs = pairnet_forward(net, assemble_junctions(testutil::random_patch(0, 1), testutil::random_patch(1, 2)),
                                       Mode::eval);
    REQUIRE(probs.size() == 5);
    double sum = 0;
    for (float v : probs) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-4));
    const std::vector<ShapeRow> table = {
        {"BatchNorm", 320, 256, 3},  {"Convolution", 318, 254, 4}, {"ReLU", 318, 254, 4},
        {"MaxPooling", 159, 127, 4}, {"BatchNorm", 159, 127, 4},   {"Convolution", 157, 125, 4},
        {"ReLU", 157, 125, 4},       {"MaxPooling", 78, 62, 4},    {"BatchNorm", 78, 62, 4},
    };
    CHECK(net.shape_trace() == table);
    CHECK_THROWS_AS(net.forward(Tensor<float>({1, 320, 255, 3}), Mode::eval), Error);
}

TEST_CASE("fresh network predicts near-uniformly") {
    PairNet<float> net(ModelParams<float>::init(NetConfig{}, 4));
    const auto images = synth_corpus(2, 4);
    const auto pa = resize_and_split(images[0], GridSpec{});
    const auto pb = resize_and_split(images[1], GridSpec{});
    Rng rng(9);
    Tensor<float> batch({100, 320, 256, 3});
    for (int i = 0; i < 100; ++i) {
        const auto& s = pa[rng.below(15)];
        const auto& t = pb[rng.below(15)];
        assemble_junctions_into(s, t, std::span<float>(batch.data).subspan(static_cast<size_t>(i) * 320 * 256 * 3,
                                                                           320 * 256 * 3));
    }
    const auto p = net.forward(batch, Mode::eval);
    for (int c = 0; c < 5; ++c) {
        double mean = 0;
        for (int i = 0; i < 100; ++i) mean += p.data[i * 5 + c];
        mean /= 100;
        CAPTURE(c);
        CHECK(mean >= 0.1);
        CHECK(mean <= 0.3);
    }
}
