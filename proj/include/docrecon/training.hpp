#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "docrecon/dataset.hpp"
#include "docrecon/metrics.hpp"
#include "docrecon/pairnet.hpp"

namespace docrecon {

struct TrainConfig {
    int epochs = 30;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int batch_size = 30;  // edges per optimizer step
    std::uint64_t seed = 0;
    LossWeights weights;
    Precision precision = Precision::f32;
    NetConfig net;
    std::size_t eval_chunk = 32;

    void validate() const;
};

// Key-value text, one "key = value" per line, '#' comments. Keys: epochs,
// learning_rate, beta1, beta2, adam_eps, batch_size, seed, weights
// (5 comma-separated), precision (f32|f16), dense (comma-separated sizes).
TrainConfig read_train_config(const std::filesystem::path& path);
TrainConfig parse_train_config(const std::string& text);

struct EpochMetrics {
    double loss = 0;
    double balanced_accuracy = 0;
    std::array<double, kNumClasses> f1{};
    Confusion confusion;
};

struct EpochRecord {
    int epoch = 0;  // 1-based
    EpochMetrics train;
    std::optional<EpochMetrics> val;

    bool operator==(const EpochRecord& o) const;
};

struct TrainResult {
    ModelParams<float> best;   // highest validation balanced accuracy (final when no validation set)
    ModelParams<float> final;
    int best_epoch = 0;
    std::vector<EpochRecord> history;
};

// Called after every epoch; returning false stops training early.
using EpochCallback = std::function<bool(const EpochRecord&, const ModelParams<float>&)>;

class AdamOptimizer {
public:
    AdamOptimizer(const TrainConfig& config, ModelParams<float>& params);

    // One update from the accumulated gradients, then zeroes them.
    void step();
    long long steps() const noexcept { return t_; }

private:
    TrainConfig config_;
    ModelParams<float>& params_;
    std::vector<std::vector<float>> m_, v_;
    long long t_ = 0;
};

// Labels of a ground-truth graph as class indices in edge order.
std::vector<int> truth_classes(const AssemblyGraph& g);

// Eval-mode loss and metrics over ground-truth graphs.
EpochMetrics evaluate(PairNet<float>& net, const std::vector<AssemblyGraph>& graphs, const LossWeights& weights,
                      std::size_t chunk = 32);

// Per epoch: visits the training graphs in a seeded order, shuffles each
// graph's edges, and takes one Adam step per edge batch.
TrainResult train(const std::vector<AssemblyGraph>& train_graphs, const std::vector<AssemblyGraph>& val_graphs,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

// Loads the manifest's train and val images from disk first.
TrainResult train(const DatasetManifest& manifest, const TrainConfig& config, const GridSpec& spec = {},
                  const EpochCallback& on_epoch = {});

// Ground-truth graphs for every image of one split.
std::vector<AssemblyGraph> load_split(const DatasetManifest& manifest, Split split, const GridSpec& spec = {});

// Columns: epoch,split,loss,balanced_accuracy,f1_1,...,f1_5.
void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path);
std::string history_csv(const std::vector<EpochRecord>& history);

// Keeps freed activation buffers in the heap so every training step does not
// fault fresh pages in. Process-wide; call once before long runs.
void keep_heap_buffers();

}  // namespace docrecon
