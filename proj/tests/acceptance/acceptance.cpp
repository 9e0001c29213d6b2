// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: acceptance [--only name,name,...]

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <json.hpp>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "../common/gradcheck.hpp"
#include "../common/oracles.hpp"
#include "docrecon/assembly.hpp"
#include "docrecon/dataset.hpp"
#include "docrecon/error.hpp"
#include "docrecon/metrics.hpp"
#include "docrecon/pairnet.hpp"
#include "docrecon/reconstruct.hpp"
#include "docrecon/rng.hpp"
#include "docrecon/service.hpp"
#include "docrecon/training.hpp"

using namespace docrecon;
using json = nlohmann::json;

namespace {

using clk = std::chrono::steady_clock;

double seconds_since(clk::time_point t0) { return std::chrono::duration<double>(clk::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string counts_string(const std::array<long long, 5>& c) {
    std::ostringstream os;
    os << "(" << c[0] << "," << c[1] << "," << c[2] << "," << c[3] << "," << c[4] << ")";
    return os.str();
}

std::string f1_string(const std::array<double, 5>& f) {
    std::string s;
    for (int k = 0; k < 5; ++k) s += (k ? "," : "") + fmt("%.3f", f[k]);
    return "F1=(" + s + ")";
}

AssemblyGraph truth_graph(const Image& img, const std::string& tag) {
    const GridSpec spec;
    return ground_truth_graph(resize_and_split(img, spec, tag), spec);
}

std::vector<AssemblyGraph> truth_graphs(int n, std::uint64_t seed, const std::string& prefix) {
    std::vector<AssemblyGraph> out;
    for (int i = 0; i < n; ++i) out.push_back(truth_graph(synth_image(seed, i), prefix + std::to_string(i)));
    return out;
}

// ---------------------------------------------------------------------------

Outcome table1_counts() {
    const auto t0 = clk::now();
    const std::array<long long, 5> table = {12, 12, 10, 10, 166};
    const auto oracle = testutil::brute_force_counts(5, 3);
    if (oracle != table) return {false, "brute force gives " + counts_string(oracle)};
    for (int i = 0; i < 20; ++i) {
        const auto c = class_counts(truth_graph(synth_image(7, i), "img"));
        if (c != table) return {false, "image " + std::to_string(i) + " gives " + counts_string(c)};
    }
    for (int rows = 2; rows <= 5; ++rows) {
        for (int cols = 2; cols <= 5; ++cols) {
            const auto spec = GridSpec::of_grid(rows, cols, 4);
            std::vector<Patch> patches;
            for (int i = 0; i < rows * cols; ++i) patches.emplace_back(i, Image(4, 4, 0.01f * i));
            const auto c = class_counts(ground_truth_graph(patches, spec));
            if (c != testutil::brute_force_counts(rows, cols)) {
                return {false, std::to_string(rows) + "x" + std::to_string(cols) + " grid gives " + counts_string(c)};
            }
        }
    }
    const double s = seconds_since(t0);
    return {s < 60.0, "20 images at " + counts_string(table) + ", grids 2x2..5x5 agree, " + fmt("%.1f s", s) + " (< 60 s)"};
}

Outcome table2_trace() {
    const std::vector<ShapeRow> table = {
        {"BatchNorm", 320, 256, 3},  {"Convolution", 318, 254, 4}, {"ReLU", 318, 254, 4},
        {"MaxPooling", 159, 127, 4}, {"BatchNorm", 159, 127, 4},   {"Convolution", 157, 125, 4},
        {"ReLU", 157, 125, 4},       {"MaxPooling", 78, 62, 4},    {"BatchNorm", 78, 62, 4},
    };
    PairNet<float> net(ModelParams<float>::init(NetConfig{}, 1));
    const auto g = truth_graph(synth_image(9, 0), "img");
    const std::size_t edges[] = {0, 1};
    net.forward(junction_batch(g, edges), Mode::eval);
    const auto& trace = net.shape_trace();
    if (trace.size() < table.size()) return {false, "trace has " + std::to_string(trace.size()) + " rows"};
    for (std::size_t i = 0; i < table.size(); ++i) {
        const auto& r = trace[i];
        if (!(r == table[i])) {
            return {false, "row " + std::to_string(i + 1) + " is " + r.layer + " " + std::to_string(r.h) + "x" +
                               std::to_string(r.w) + "x" + std::to_string(r.c)};
        }
    }
    return {true, std::to_string(table.size()) + " rows, 320x256x3 -> 78x62x4"};
}

Outcome gradients() {
    const auto t0 = clk::now();
    double worst = 0;
    std::string worst_name;
    std::size_t max_skip_pct = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        std::size_t total = 0, skipped = 0;
        for (const auto& row : testutil::gradient_check(seed, 1e-3)) {
            if (!(row.rel_error < 1e-2)) {
                return {false, "seed " + std::to_string(seed) + " " + row.name + " rel " + fmt("%.3g", row.rel_error)};
            }
            if (row.rel_error > worst) {
                worst = row.rel_error;
                worst_name = row.name;
            }
            total += row.size;
            skipped += row.skipped;
        }
        if (2 * skipped > total) {
            return {false, "seed " + std::to_string(seed) + " skipped " + std::to_string(skipped) + "/" +
                               std::to_string(total) + " elements at kinks"};
        }
        max_skip_pct = std::max(max_skip_pct, 100 * skipped / total);
    }
    // small step: no kink crossings, every element compared
    for (const auto& row : testutil::gradient_check(1, 1e-5)) {
        if (row.skipped != 0 || !(row.rel_error < 1e-2)) {
            return {false, "step 1e-5: " + row.name + " rel " + fmt("%.3g", row.rel_error) + ", skipped " +
                               std::to_string(row.skipped)};
        }
    }
    const double s = seconds_since(t0);
    return {s < 120.0, "5 seeds, worst rel " + fmt("%.2e", worst) + " (" + worst_name + ") < 1e-2, at most " +
                           std::to_string(max_skip_pct) + "% skipped at kinks, " + fmt("%.1f s", s) + " (< 120 s)"};
}

Outcome loss_and_metrics() {
    const LossWeights w;
    auto row = [](std::array<double, 5> v) {
        Tensor<double> t({1, 5});
        std::copy(v.begin(), v.end(), t.data.begin());
        return t;
    };
    const std::array<double, 5> uniform = {0.2, 0.2, 0.2, 0.2, 0.2};
    const double cases[3][2] = {
        {weighted_ce(row({1, 0, 0, 0, 0}), row({1, 0, 0, 0, 0}), w), 0.0},
        {weighted_ce(row(uniform), row({0, 0, 0, 0, 1}), w), 0.16094},
        {weighted_ce(row(uniform), row({1, 0, 0, 0, 0}), w), 1.28755},
    };
    for (const auto& c : cases) {
        if (!(std::fabs(c[0] - c[1]) <= 1e-4)) return {false, "CE " + fmt("%.6f", c[0]) + " vs " + fmt("%.5f", c[1])};
    }
    Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        const Confusion c = testutil::random_confusion(rng);
        const testutil::Samples s(c);
        if (balanced_accuracy(c) != s.balanced_accuracy()) return {false, "BA differs on matrix " + std::to_string(trial)};
        const auto f1 = per_class_f1(c);
        for (int k = 0; k < 5; ++k) {
            if (f1[k] != s.f1(k)) return {false, "F1 differs on matrix " + std::to_string(trial)};
        }
    }
    return {true, "CE 0, 0.16094, 1.28755 within 1e-4; BA and F1 exact on 100 matrices"};
}

Outcome layout_oracle() {
    const GridSpec spec;
    for (int i = 0; i < 20; ++i) {
        // start from a differently sized original so the resize path is exercised too
        const Image original = resize_bilinear(synth_image(13, i), 1000, 900);
        const Image resized = resize_bilinear(original, spec.image_h, spec.image_w);
        const auto g = ground_truth_graph(resize_and_split(original, spec, "img"), spec);
        const auto res = layout(g);
        const std::string which = "image " + std::to_string(i);
        if (!res.collisions.empty()) return {false, which + ": " + std::to_string(res.collisions.size()) + " collisions"};
        if (res.components.size() != 1) return {false, which + ": " + std::to_string(res.components.size()) + " components"};
        for (int id = 0; id < spec.count(); ++id) {
            const GridPos want{id % spec.cols(), id / spec.cols()};
            const auto it = res.components[0].position.find(id);
            if (it == res.components[0].position.end() || it->second != want) {
                return {false, which + ": node " + std::to_string(id) + " misplaced"};
            }
        }
        const auto mosaics = render(g, res);
        if (mosaics.size() != 1 || !(mosaics[0] == resized)) return {false, which + ": render differs from the resized image"};
    }
    return {true, "20 images, grid coordinates exact, 0 collisions, renders bit-exact"};
}

// ---------------------------------------------------------------------------
// Learnability

struct Learned {
    std::optional<ModelParams<float>> model;  // from run (b)
};

EpochMetrics eval_params(const ModelParams<float>& p, const std::vector<AssemblyGraph>& graphs) {
    PairNet<float> net(p);
    return evaluate(net, graphs, LossWeights{});
}

Outcome loss_decreases() {
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 4;
    const auto result = train(truth_graphs(4, 404, "d"), {}, cfg);
    std::string detail;
    bool pass = result.history.size() == 3;
    for (std::size_t i = 0; i < result.history.size(); ++i) {
        detail += (i ? " -> " : "loss ") + fmt("%.4f", result.history[i].train.loss);
        if (i > 0 && !(result.history[i].train.loss < result.history[i - 1].train.loss)) pass = false;
    }
    return {pass, detail + " on 4 images"};
}

Outcome overfit() {
    const auto t0 = clk::now();
    const auto graphs = truth_graphs(8, 101, "o");
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.seed = 1;
    // The criterion is the train balanced accuracy recorded by the training loop
    // (train-mode forward, per-batch statistics). The eval-mode figure over the
    // same images is reported next to it.
    double reached = 0;
    int epoch_reached = 0;
    std::optional<ModelParams<float>> at_reach;
    train(graphs, {}, cfg, [&](const EpochRecord& r, const ModelParams<float>& p) {
        std::printf("  overfit epoch %3d  loss %.4f  train BA %.4f\n", r.epoch, r.train.loss, r.train.balanced_accuracy);
        std::fflush(stdout);
        if (r.train.balanced_accuracy < 0.95) return true;
        reached = r.train.balanced_accuracy;
        epoch_reached = r.epoch;
        at_reach = p;
        return false;
    });
    if (epoch_reached == 0) return {false, "train BA did not reach 0.95 in 200 epochs"};
    const double eval_ba = eval_params(*at_reach, graphs).balanced_accuracy;
    return {true, "train BA " + fmt("%.4f", reached) + " >= 0.95 at epoch " + std::to_string(epoch_reached) +
                      " of 200 (eval-mode BA on the same images " + fmt("%.4f", eval_ba) + "), " +
                      fmt("%.0f s", seconds_since(t0))};
}

// Runs (b) and reports (b) and (c).
std::pair<Outcome, Outcome> generalize(Learned& learned) {
    const auto t0 = clk::now();
    const auto train_set = truth_graphs(64, 202, "t");
    const auto val_set = truth_graphs(16, 303, "v");
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.seed = 2;
    // Converged: BA >= 0.5 reached and no new best for `patience` epochs.
    const int patience = 2;
    double best = -1;
    int best_epoch = 0;
    const auto result = train(train_set, val_set, cfg, [&](const EpochRecord& r, const ModelParams<float>&) {
        const double ba = r.val->balanced_accuracy;
        std::printf("  generalize epoch %2d  train loss %.4f BA %.4f  val loss %.4f BA %.4f\n", r.epoch, r.train.loss,
                    r.train.balanced_accuracy, r.val->loss, ba);
        std::fflush(stdout);
        if (ba > best) {
            best = ba;
            best_epoch = r.epoch;
        }
        return !(best >= 0.5 && r.epoch - best_epoch >= patience);
    });
    learned.model = result.best;
    const EpochMetrics val = eval_params(result.best, val_set);
    const int epochs_run = static_cast<int>(result.history.size());
    Outcome b{val.balanced_accuracy >= 0.5, "val BA " + fmt("%.4f", val.balanced_accuracy) + " >= 0.5 (best epoch " +
                                                std::to_string(result.best_epoch) + ", " + std::to_string(epochs_run) +
                                                " of 50 run), " + fmt("%.0f s", seconds_since(t0))};
    const auto& f1 = val.f1;
    bool none_best = true;
    for (int k = 0; k < 4; ++k) none_best = none_best && f1[4] > f1[k];
    Outcome c{none_best, "val " + f1_string(f1) + ", None highest"};
    if (!none_best) c.detail = "val " + f1_string(f1) + ", None not highest";
    return {b, c};
}

Outcome mixed_separation(const Learned& learned) {
    if (!learned.model) return {false, "no model from the generalization run"};
    int clean = 0;
    std::size_t kept_total = 0, comps_total = 0;
    for (int trial = 0; trial < 10; ++trial) {
        const std::string a = "a" + std::to_string(trial), b = "b" + std::to_string(trial);
        auto patches = resize_and_split(synth_image(505, 2 * trial), GridSpec{}, a);
        for (auto& p : resize_and_split(synth_image(505, 2 * trial + 1), GridSpec{}, b)) {
            patches.emplace_back(p.node_id + 15, p.pixels, p.source_tag);
        }
        const auto g = filter_edges(infer(complete_graph(std::move(patches)), *learned.model, 30), 0.8);
        for (std::size_t e = 0; e < g.edge_count(); ++e) kept_total += g.label(e) != RelationLabel::None;
        bool mixed = false;
        const auto comps = connected_components(g);
        comps_total += comps.size();
        for (const auto& comp : comps) {
            std::set<std::string> tags;
            for (int id : comp) tags.insert(g.node(id).source_tag);
            mixed = mixed || tags.size() > 1;
        }
        clean += !mixed;
        std::printf("  mixed trial %d  %zu components  %s\n", trial, comps.size(), mixed ? "mixed" : "separated");
        std::fflush(stdout);
    }
    return {clean >= 8, std::to_string(clean) + "/10 trials unmixed (>= 8), mean " + fmt("%.1f", kept_total / 10.0) +
                            " kept edges and " + fmt("%.1f", comps_total / 10.0) + " components per trial"};
}

// Scripted session over HTTP; returns every response as "status body".
std::vector<std::string> replay(const ModelParams<float>& model, std::string& error) {
    ServiceConfig cfg;
    cfg.model = model;
    SessionStore store(cfg);
    HttpServer server(store);
    const int port = server.bind({"127.0.0.1", 0});
    std::thread runner([&] { server.run(); });
    httplib::Client cli("127.0.0.1", port);
    cli.set_read_timeout(600, 0);

    std::vector<std::string> log;
    auto record = [&](const httplib::Result& r, int want, const char* step) {
        if (!r) {
            error = std::string(step) + ": no response";
            return std::string();
        }
        if (r->status != want && error.empty()) error = std::string(step) + ": status " + std::to_string(r->status);
        log.push_back(std::to_string(r->status) + " " + r->body);
        return r->body;
    };

    httplib::MultipartFormDataItems items;
    for (const auto& p : resize_and_split(synth_image(606, 0), GridSpec{}, "replay")) {
        const auto png = encode_png(*p.pixels);
        items.push_back({"patches", std::string(png.begin(), png.end()), patch_filename("replay", p.node_id), "image/png"});
    }
    const std::string created = record(cli.Post("/graphs", items), 201, "upload");
    if (error.empty()) {
        const std::string base = "/graphs/" + json::parse(created)["graph_id"].get<std::string>();
        record(cli.Get(base), 200, "view");
        record(cli.Post(base + "/tau", R"({"tau": 0.5})", "application/json"), 200, "tau");
        const std::string before = record(cli.Get(base), 200, "view after tau");
        const json view = json::parse(before);
        std::optional<std::pair<int, int>> victim;
        for (const auto& e : view["edges"]) {
            if (e["predicted"] != "_") {
                victim = {e["source"].get<int>(), e["target"].get<int>()};
                break;
            }
        }
        if (!victim) {
            if (error.empty()) error = "no directional edge to delete at tau 0.5";
        } else {
            const json edit = {{"op", "delete_edge"}, {"source", victim->first}, {"target", victim->second}};
            record(cli.Post(base + "/edits", edit.dump(), "application/json"), 200, "delete");
            record(cli.Get(base), 200, "view after delete");
            record(cli.Post(base + "/undo", "", "application/json"), 200, "undo");
            const std::string restored = record(cli.Get(base), 200, "view after undo");
            if (restored != before && error.empty()) error = "undo did not restore the view";
        }
        record(cli.Get(base + "/patches/0.png"), 200, "patch");
    }
    server.stop();
    runner.join();
    return log;
}

Outcome service_replay(const Learned& learned) {
    if (!learned.model) return {false, "no model from the generalization run"};
    std::string e1, e2;
    const auto first = replay(*learned.model, e1);
    const auto second = replay(*learned.model, e2);
    if (!e1.empty()) return {false, "first replay: " + e1};
    if (!e2.empty()) return {false, "second replay: " + e2};
    if (first != second) return {false, "responses differ between replays"};
    std::size_t bytes = 0;
    for (const auto& s : first) bytes += s.size();
    return {true, std::to_string(first.size()) + " responses (" + std::to_string(bytes) +
                      " bytes) byte-identical across 2 replays"};
}

}  // namespace

int main(int argc, char** argv) {
    keep_heap_buffers();
    std::set<std::string> only;
    for (int i = 1; i + 1 < argc; i += 2) {
        if (std::string(argv[i]) == "--only") {
            std::stringstream ss(argv[i + 1]);
            for (std::string n; std::getline(ss, n, ',');) only.insert(n);
        }
    }
    auto wanted = [&](const std::string& name) { return only.empty() || only.contains(name); };

    int failures = 0;
    auto run = [&](const std::string& name, const std::function<Outcome()>& f) {
        if (!wanted(name)) return;
        const auto t0 = clk::now();
        Outcome o;
        try {
            o = f();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::printf("%s  %-24s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), seconds_since(t0));
        std::fflush(stdout);
    };

    run("table1_class_counts", table1_counts);
    run("table2_shape_trace", table2_trace);
    run("gradient_check", gradients);
    run("loss_metric_oracles", loss_and_metrics);
    run("layout_oracle", layout_oracle);
    run("learn_loss_decreases", loss_decreases);
    run("learn_overfit", overfit);

    Learned learned;
    const bool need_model = wanted("learn_generalize") || wanted("learn_none_f1_highest") ||
                            wanted("mixed_separation") || wanted("service_replay");
    if (need_model) {
        std::pair<Outcome, Outcome> bc;
        const auto t0 = clk::now();
        try {
            bc = generalize(learned);
        } catch (const std::exception& e) {
            bc.first = bc.second = {false, std::string("exception: ") + e.what()};
        }
        const double s = seconds_since(t0);
        for (const auto& [name, o] : {std::pair{"learn_generalize", bc.first}, std::pair{"learn_none_f1_highest", bc.second}}) {
            if (!wanted(name)) continue;
            failures += !o.pass;
            std::printf("%s  %-24s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), s);
        }
        std::fflush(stdout);
    }
    run("mixed_separation", [&] { return mixed_separation(learned); });
    run("service_replay", [&] { return service_replay(learned); });

    std::printf("%s: %d failed\n", failures ? "FAIL" : "PASS", failures);
    return failures ? 1 : 0;
}
