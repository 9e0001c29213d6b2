#include <CLI11.hpp>

#include <signal.h>
#include <unistd.h>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <thread>

#include "docrecon/assembly.hpp"
#include "docrecon/checkpoint.hpp"
#include "docrecon/dataset.hpp"
#include "docrecon/error.hpp"
#include "docrecon/graphio.hpp"
#include "docrecon/reconstruct.hpp"
#include "docrecon/service.hpp"
#include "docrecon/training.hpp"

namespace fs = std::filesystem;
using namespace docrecon;

// Exit codes:
//   0  success
//   1  unexpected failure
//   2  bad command line (CLI11 usage errors also land here)
//   3  file missing or unreadable/unwritable
//   4  invalid or malformed input data
//   5  service unavailable (e.g. cannot bind)
namespace {

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::invalid_argument: return 2;
        case ErrorKind::io:
        case ErrorKind::not_found: return 3;
        case ErrorKind::unavailable: return 5;
        default: return 4;
    }
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error(ErrorKind::io, "not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

// Manifest paths are stored relative to the manifest's directory.
DatasetManifest load_manifest(const fs::path& path) {
    DatasetManifest m = read_manifest(path);
    const fs::path base = path.parent_path();
    for (auto& e : m.entries) {
        if (fs::path(e.path).is_relative()) e.path = (base / e.path).lexically_normal().string();
    }
    return m;
}

SplitRatios parse_ratios(const std::string& text) {
    std::vector<double> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            v.push_back(std::stod(item));
        } catch (const std::logic_error&) {
            throw Error(ErrorKind::invalid_argument, "bad ratio '" + item + "'");
        }
    }
    if (v.size() != 3) throw Error(ErrorKind::invalid_argument, "--ratios needs three comma-separated values");
    return SplitRatios{v[0], v[1], v[2]};
}

void print_metrics_table(const std::vector<std::pair<std::string, EpochMetrics>>& rows) {
    std::printf("%-12s %8s %8s %8s %8s %8s %8s %8s\n", "", "Loss", "Acc", "F1_1", "F1_2", "F1_3", "F1_4", "F1_5");
    for (const auto& [name, m] : rows) {
        std::printf("%-12s %8.4f %8.4f", name.c_str(), m.loss, m.balanced_accuracy);
        for (double f : m.f1) std::printf(" %8.4f", f);
        std::printf("\n");
    }
}

ExportOptions export_options(const std::string& mode, const fs::path& out) {
    ExportOptions opts;
    if (mode == "embed") {
        opts.patches = ExportOptions::Patches::embed;
    } else if (mode == "files") {
        opts.patches = ExportOptions::Patches::files;
        opts.files_dir = out.stem().string() + "_patches";
    } else if (mode == "none") {
        opts.patches = ExportOptions::Patches::none;
    } else {
        throw Error(ErrorKind::invalid_argument, "--patches must be embed, files or none");
    }
    return opts;
}

std::pair<std::string, int> parse_addr(const std::string& addr) {
    const auto colon = addr.rfind(':');
    if (colon == std::string::npos) throw Error(ErrorKind::invalid_argument, "--addr must be host:port");
    try {
        return {addr.substr(0, colon), std::stoi(addr.substr(colon + 1))};
    } catch (const std::logic_error&) {
        throw Error(ErrorKind::invalid_argument, "bad port in '" + addr + "'");
    }
}

}  // namespace

int main(int argc, char** argv) {
    keep_heap_buffers();
    CLI::App app{"Patch-graph document reassembly"};
    app.require_subcommand(1);

    // synth
    int synth_n = 1;
    std::uint64_t synth_seed = 0;
    std::string synth_out;
    auto* synth = app.add_subcommand("synth", "Write seeded synthetic document images");
    synth->add_option("--n", synth_n, "Number of images")->check(CLI::PositiveNumber);
    synth->add_option("--seed", synth_seed, "Corpus seed");
    synth->add_option("--out", synth_out, "Output directory")->required();

    // split-image
    std::string split_in, split_manifest, split_patches, split_ratios = "3394,500,200";
    std::uint64_t split_seed = 0;
    auto* split = app.add_subcommand("split-image", "Make a train/val/test manifest and optionally cut patches");
    split->add_option("--in", split_in, "Image file or directory of PNGs")->required();
    split->add_option("--out-manifest", split_manifest, "Manifest to write")->required();
    split->add_option("--ratios", split_ratios, "train,val,test weights (normalized)");
    split->add_option("--seed", split_seed, "Shuffle seed");
    split->add_option("--patches-dir", split_patches, "Also write every image's patches here");

    // train
    std::string train_manifest, train_config, train_ckpt, train_history;
    auto* trn = app.add_subcommand("train", "Train the pairwise model");
    trn->add_option("--manifest", train_manifest)->required();
    trn->add_option("--config", train_config, "key = value training config");
    trn->add_option("--out-checkpoint", train_ckpt)->required();
    trn->add_option("--history", train_history, "Per-epoch metrics CSV");

    // eval
    std::string eval_manifest, eval_ckpt;
    std::size_t eval_chunk = kDefaultInferChunk;
    auto* evl = app.add_subcommand("eval", "Loss, balanced accuracy and per-class F1 per split");
    evl->add_option("--manifest", eval_manifest)->required();
    evl->add_option("--checkpoint", eval_ckpt)->required();
    evl->add_option("--chunk", eval_chunk, "Edges per forward batch");

    // infer
    std::string infer_dir, infer_ckpt, infer_out, infer_patches = "embed";
    std::size_t infer_chunk = kDefaultInferChunk;
    auto* inf = app.add_subcommand("infer", "Predict every edge of the complete graph over a patch directory");
    inf->add_option("--patches-dir", infer_dir)->required();
    inf->add_option("--checkpoint", infer_ckpt)->required();
    inf->add_option("--out", infer_out)->required();
    inf->add_option("--chunk", infer_chunk, "Edges per forward batch");
    inf->add_option("--patches", infer_patches, "embed | files | none");

    // layout
    std::string layout_graph, layout_out, layout_patches = "embed";
    double layout_tau = 0.8;
    auto* lay = app.add_subcommand("layout", "Threshold a predicted graph and place its components");
    lay->add_option("--graph", layout_graph)->required();
    lay->add_option("--tau", layout_tau)->check(CLI::Range(0.0, 1.0));
    lay->add_option("--out", layout_out)->required();
    lay->add_option("--patches", layout_patches, "embed | files | none");

    // render
    std::string render_graph, render_out;
    std::optional<double> render_tau;
    auto* ren = app.add_subcommand("render", "Write one PNG mosaic per component");
    ren->add_option("--graph", render_graph)->required();
    ren->add_option("--out-dir", render_out)->required();
    ren->add_option("--tau", render_tau, "Threshold before layout (default: use the labels as stored)")
        ->check(CLI::Range(0.0, 1.0));

    // serve
    std::string serve_ckpt, serve_addr = "127.0.0.1:8080", serve_snapshot;
    int serve_patch = kDefaultPatchSize;
    double serve_tau = 0.8;
    auto* srv = app.add_subcommand("serve", "HTTP curation service");
    srv->add_option("--checkpoint", serve_ckpt)->envname("DOCRECON_CHECKPOINT");
    srv->add_option("--addr", serve_addr, "host:port")->envname("DOCRECON_ADDR");
    srv->add_option("--patch-size", serve_patch)->envname("DOCRECON_PATCH_SIZE");
    srv->add_option("--tau", serve_tau, "Default threshold")->envname("DOCRECON_TAU")->check(CLI::Range(0.0, 1.0));
    srv->add_option("--snapshot", serve_snapshot, "Session snapshot, loaded at start and saved on shutdown")
        ->envname("DOCRECON_SNAPSHOT");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*synth) {
            fs::create_directories(synth_out);
            for (int i = 0; i < synth_n; ++i) {
                char name[32];
                std::snprintf(name, sizeof name, "img_%04d.png", i);
                write_png(synth_image(synth_seed, static_cast<std::uint64_t>(i)), fs::path(synth_out) / name);
            }
            std::cout << "wrote " << synth_n << " images to " << synth_out << "\n";
        } else if (*split) {
            std::vector<fs::path> images;
            if (fs::is_directory(split_in)) {
                images = list_pngs(split_in);
            } else if (fs::is_regular_file(split_in)) {
                images.push_back(split_in);
            } else {
                throw Error(ErrorKind::io, "no such file or directory: " + split_in);
            }
            if (images.empty()) throw Error(ErrorKind::invalid_argument, "no PNG images in " + split_in);
            const fs::path mdir = fs::absolute(split_manifest).parent_path();
            std::vector<std::string> rel;
            for (const auto& p : images) rel.push_back(fs::relative(fs::absolute(p), mdir).generic_string());
            SplitRatios r = parse_ratios(split_ratios);
            const double total = r.train + r.val + r.test;
            if (!(total > 0)) throw Error(ErrorKind::invalid_argument, "ratios must sum to a positive value");
            r = {r.train / total, r.val / total, r.test / total};
            const DatasetManifest m = make_splits(rel, r, split_seed);
            if (!mdir.empty()) fs::create_directories(mdir);
            write_manifest(m, split_manifest);
            if (!split_patches.empty()) {
                fs::create_directories(split_patches);
                for (const auto& p : images) {
                    const std::string tag = p.stem().string();
                    for (const auto& patch : resize_and_split(read_png(p), GridSpec{}, tag)) {
                        write_png(*patch.pixels, fs::path(split_patches) / patch_filename(tag, patch.node_id));
                    }
                }
            }
            std::cout << "train " << m.count(Split::train) << ", val " << m.count(Split::val) << ", test "
                      << m.count(Split::test) << "\n";
        } else if (*trn) {
            const TrainConfig cfg = train_config.empty() ? TrainConfig{} : read_train_config(train_config);
            const DatasetManifest m = load_manifest(train_manifest);
            const TrainResult result = train(m, cfg, GridSpec{}, [](const EpochRecord& r, const ModelParams<float>&) {
                std::printf("epoch %3d  train loss %.4f acc %.4f", r.epoch, r.train.loss, r.train.balanced_accuracy);
                if (r.val) std::printf("  val loss %.4f acc %.4f", r.val->loss, r.val->balanced_accuracy);
                std::printf("\n");
                std::fflush(stdout);
                return true;
            });
            save_checkpoint(result.best, train_ckpt, cfg.precision);
            if (!train_history.empty()) write_history_csv(result.history, train_history);
            std::cout << "best epoch " << result.best_epoch << ", checkpoint " << train_ckpt << "\n";
        } else if (*evl) {
            const DatasetManifest m = load_manifest(eval_manifest);
            PairNet<float> net(load_checkpoint(eval_ckpt));
            const LossWeights weights;
            std::vector<std::pair<std::string, EpochMetrics>> rows;
            const std::pair<Split, const char*> order[] = {
                {Split::train, "Training"}, {Split::val, "Validation"}, {Split::test, "Test"}};
            for (const auto& [s, name] : order) {
                if (m.count(s) == 0) continue;
                rows.emplace_back(name, evaluate(net, load_split(m, s), weights, eval_chunk));
            }
            print_metrics_table(rows);
        } else if (*inf) {
            const AssemblyGraph g = complete_graph(load_patch_dir(infer_dir));
            const AssemblyGraph out = infer(g, load_checkpoint(infer_ckpt), infer_chunk);
            export_graph(out, nullptr, infer_out, export_options(infer_patches, infer_out));
            std::cout << out.node_count() << " nodes, " << out.edge_count() << " edges -> " << infer_out << "\n";
        } else if (*lay) {
            const ImportedGraph in = import_graph(layout_graph);
            const AssemblyGraph filtered = filter_edges(in.graph, layout_tau);
            const LayoutResult res = layout(filtered);
            export_graph(filtered, &res, layout_out, export_options(layout_patches, layout_out));
            std::cout << res.components.size() << " components, " << res.collisions.size() << " collisions -> "
                      << layout_out << "\n";
        } else if (*ren) {
            const ImportedGraph in = import_graph(render_graph);
            const AssemblyGraph g = render_tau ? filter_edges(in.graph, *render_tau) : in.graph;
            const LayoutResult res = layout(g);
            const auto mosaics = render(g, res);
            fs::create_directories(render_out);
            for (std::size_t i = 0; i < mosaics.size(); ++i) {
                char name[40];
                std::snprintf(name, sizeof name, "component_%03zu.png", i);
                write_png(mosaics[i], fs::path(render_out) / name);
            }
            std::cout << mosaics.size() << " mosaics -> " << render_out << "\n";
        } else if (*srv) {
            ServiceConfig sc;
            if (!serve_ckpt.empty()) sc.model = load_checkpoint(serve_ckpt);
            sc.patch_size = serve_patch;
            sc.default_tau = serve_tau;
            SessionStore store(std::move(sc));
            if (!serve_snapshot.empty() && fs::exists(serve_snapshot)) store.load_snapshot(serve_snapshot);

            sigset_t sigs;
            sigemptyset(&sigs);
            sigaddset(&sigs, SIGINT);
            sigaddset(&sigs, SIGTERM);
            pthread_sigmask(SIG_BLOCK, &sigs, nullptr);

            HttpServer server(store);
            const auto [host, port] = parse_addr(serve_addr);
            int bound;
            try {
                bound = server.bind({host, port});
            } catch (const Error& e) {
                throw Error(ErrorKind::unavailable, e.what());
            }
            std::cout << "listening on " << host << ":" << bound << (store.has_model() ? "" : " (no checkpoint)")
                      << "\n"
                      << std::flush;
            std::atomic<bool> signalled{false};
            std::thread waiter([&] {
                int sig = 0;
                sigwait(&sigs, &sig);
                signalled = true;
                server.stop();
            });
            server.run();
            if (!signalled) kill(getpid(), SIGTERM);  // wake the waiter; the signal stays blocked
            waiter.join();
            if (!serve_snapshot.empty()) store.save_snapshot(serve_snapshot);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
