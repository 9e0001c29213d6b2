#include <doctest.h>

#include "docrecon/assembly.hpp"
#include "docrecon/error.hpp"
#include "docrecon/training.hpp"
#include "helpers.hpp"

using namespace docrecon;

namespace {

std::vector<AssemblyGraph> small_graphs(int n, std::uint64_t seed) {
    const auto spec = GridSpec::of_grid(2, 2);
    std::vector<AssemblyGraph> out;
    for (int i = 0; i < n; ++i) {
        out.push_back(ground_truth_graph(resize_and_split(synth_image(seed, i), spec, "img" + std::to_string(i)), spec));
    }
    return out;
}

}  // namespace

TEST_CASE("config parsing") {
    const auto c = parse_train_config(
        "# comment\n"
        "epochs = 7\n"
        "learning_rate = 0.01  # trailing\n"
        "batch_size=12\n"
        "seed = 42\n"
        "weights = 1, 1, 1, 1, 0.5\n"
        "precision = f16\n"
        "dense = 64, 16, 5\n");
    CHECK(c.epochs == 7);
    CHECK(c.learning_rate == 0.01);
    CHECK(c.batch_size == 12);
    CHECK(c.seed == 42);
    CHECK(c.weights.w[4] == 0.5);
    CHECK(c.precision == Precision::f16);
    CHECK(c.net.dense == std::vector<int>{64, 16, 5});
    const TrainConfig d = parse_train_config("");
    CHECK(d.epochs == 30);
    CHECK(d.batch_size == 30);
    CHECK(d.weights.w == std::array<double, 5>{0.8, 0.8, 0.8, 0.8, 0.1});
    CHECK_THROWS_AS(parse_train_config("epochs = many\n"), Error);
    CHECK_THROWS_AS(parse_train_config("colour = blue\n"), Error);
    CHECK_THROWS_AS(parse_train_config("epochs 3\n"), Error);
    CHECK_THROWS_AS(parse_train_config("epochs = 0\n"), Error);
    CHECK_THROWS_AS(parse_train_config("dense = 8, 4\n"), Error);
}

TEST_CASE("Adam first step moves each weight by about the learning rate") {
    TrainConfig cfg;
    cfg.net = NetConfig::tiny();
    auto p = ModelParams<float>::init(cfg.net, 1);
    const auto before = p.dense[0].weight.value;
    for (std::size_t i = 0; i < p.dense[0].weight.grad.size(); ++i) p.dense[0].weight.grad.data[i] = (i % 2) ? 3.0f : -0.5f;
    AdamOptimizer adam(cfg, p);
    adam.step();
    for (std::size_t i = 0; i < before.size(); ++i) {
        const double expected = before.data[i] - ((i % 2) ? 1e-3 : -1e-3);
        CHECK(p.dense[0].weight.value.data[i] == doctest::Approx(expected).epsilon(1e-5));
    }
    CHECK(p.dense[0].weight.grad.data[0] == 0.0f);
    CHECK(adam.steps() == 1);
}

TEST_CASE("truth classes and evaluation of ground truth graphs") {
    const auto graphs = small_graphs(1, 3);
    const auto truth = truth_classes(graphs[0]);
    REQUIRE(truth.size() == 12);
    CHECK(truth[*graphs[0].find_edge(0, 1)] == class_index(RelationLabel::Right));
    PairNet<float> net(ModelParams<float>::init(NetConfig{}, 2));
    const auto m = evaluate(net, graphs, LossWeights{});
    CHECK(m.confusion.total() == 12);
    CHECK(m.loss > 0);
}

TEST_CASE("training is deterministic and reports history") {
    const auto train_set = small_graphs(2, 5);
    const auto val_set = small_graphs(1, 6);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 6;
    cfg.seed = 9;
    const auto a = train(train_set, val_set, cfg);
    const auto b = train(train_set, val_set, cfg);
    REQUIRE(a.history.size() == 2);
    CHECK(a.history == b.history);
    CHECK(a.history[0].train.confusion.total() == 24);
    CHECK(a.history[0].val->confusion.total() == 12);
    CHECK(a.final.dense[3].weight.value == b.final.dense[3].weight.value);
    CHECK(a.best_epoch >= 1);
    const std::string csv = history_csv(a.history);
    CHECK(csv.rfind("epoch,split,loss,balanced_accuracy,f1_1,f1_2,f1_3,f1_4,f1_5\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);

    cfg.seed = 10;
    CHECK_FALSE(train(train_set, val_set, cfg).history == a.history);
}

TEST_CASE("early stop and f16 storage") {
    const auto train_set = small_graphs(1, 7);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.precision = Precision::f16;
    int calls = 0;
    const auto r = train(train_set, {}, cfg, [&](const EpochRecord&, const ModelParams<float>&) { return ++calls < 2; });
    CHECK(r.history.size() == 2);
    for (const auto* p : r.final.parameters())
        for (float v : p->value.data) REQUIRE(v == round_to_half(v));
    CHECK_THROWS_AS(train({}, {}, cfg), Error);
}
