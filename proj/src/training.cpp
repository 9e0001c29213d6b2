#include "docrecon/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "docrecon/assembly.hpp"
#include "docrecon/error.hpp"
#include "docrecon/rng.hpp"

namespace docrecon {

void TrainConfig::validate() const {
    if (epochs < 1) throw Error(ErrorKind::invalid_argument, "epochs must be >= 1");
    if (batch_size < 1) throw Error(ErrorKind::invalid_argument, "batch_size must be >= 1");
    if (!(learning_rate > 0)) throw Error(ErrorKind::invalid_argument, "learning_rate must be positive");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) {
        throw Error(ErrorKind::invalid_argument, "Adam betas must lie in [0,1)");
    }
    weights.validate();
    net.validate();
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<double> parse_list(const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        const std::string t = trim(item);
        double d = std::stod(t, &used);
        if (used != t.size()) throw std::invalid_argument(t);
        out.push_back(d);
    }
    return out;
}

double parse_number(const std::string& v) {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
}

}  // namespace

TrainConfig parse_train_config(const std::string& text) {
    TrainConfig c;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorKind::malformed, "config line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "epochs") c.epochs = static_cast<int>(parse_number(value));
            else if (key == "learning_rate") c.learning_rate = parse_number(value);
            else if (key == "beta1") c.beta1 = parse_number(value);
            else if (key == "beta2") c.beta2 = parse_number(value);
            else if (key == "adam_eps") c.adam_eps = parse_number(value);
            else if (key == "batch_size") c.batch_size = static_cast<int>(parse_number(value));
            else if (key == "seed") c.seed = std::stoull(value);
            else if (key == "eval_chunk") c.eval_chunk = static_cast<std::size_t>(parse_number(value));
            else if (key == "precision") {
                if (value == "f32") c.precision = Precision::f32;
                else if (value == "f16") c.precision = Precision::f16;
                else throw std::invalid_argument(value);
            } else if (key == "weights") {
                auto w = parse_list(value);
                if (w.size() != kNumClasses) throw std::invalid_argument("need 5 weights");
                std::copy(w.begin(), w.end(), c.weights.w.begin());
            } else if (key == "dense") {
                c.net.dense.clear();
                for (double d : parse_list(value)) c.net.dense.push_back(static_cast<int>(d));
            } else {
                throw Error(ErrorKind::malformed, "config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
            }
        } catch (const std::logic_error&) {
            throw Error(ErrorKind::malformed, "config line " + std::to_string(lineno) + ": bad value for '" + key + "'");
        }
    }
    c.validate();
    return c;
}

TrainConfig read_train_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_train_config(ss.str());
}

bool EpochRecord::operator==(const EpochRecord& o) const {
    auto same = [](const EpochMetrics& a, const EpochMetrics& b) {
        return a.loss == b.loss && a.balanced_accuracy == b.balanced_accuracy && a.f1 == b.f1 &&
               a.confusion == b.confusion;
    };
    if (epoch != o.epoch || !same(train, o.train) || val.has_value() != o.val.has_value()) return false;
    return !val || same(*val, *o.val);
}

AdamOptimizer::AdamOptimizer(const TrainConfig& config, ModelParams<float>& params)
    : config_(config), params_(params) {
    for (auto* p : params_.parameters()) {
        m_.emplace_back(p->value.size(), 0.0f);
        v_.emplace_back(p->value.size(), 0.0f);
    }
}

void AdamOptimizer::step() {
    ++t_;
    const float b1 = static_cast<float>(config_.beta1), b2 = static_cast<float>(config_.beta2);
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    const float step = static_cast<float>(config_.learning_rate / c1);
    const float inv_c2 = static_cast<float>(1.0 / c2);
    const float eps = static_cast<float>(config_.adam_eps);
    const bool half = config_.precision == Precision::f16;
    auto params = params_.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        float* w = params[i]->value.ptr();
        float* g = params[i]->grad.ptr();
        float* m = m_[i].data();
        float* v = v_[i].data();
        const std::size_t n = params[i]->value.size();
#pragma omp simd
        for (std::size_t k = 0; k < n; ++k) {
            m[k] = b1 * m[k] + (1.0f - b1) * g[k];
            v[k] = b2 * v[k] + (1.0f - b2) * g[k] * g[k];
            w[k] -= step * m[k] / (std::sqrt(v[k] * inv_c2) + eps);
            g[k] = 0.0f;
        }
        if (half) {
            for (std::size_t k = 0; k < n; ++k) w[k] = round_to_half(w[k]);
        }
    }
}

std::vector<int> truth_classes(const AssemblyGraph& g) {
    std::vector<int> out(g.edge_count());
    for (std::size_t e = 0; e < g.edge_count(); ++e) out[e] = class_index(g.label(e));
    return out;
}

namespace {

void finish_metrics(EpochMetrics& m, double loss_sum, long long samples) {
    m.loss = samples ? loss_sum / static_cast<double>(samples) : 0.0;
    m.balanced_accuracy = m.confusion.total() ? balanced_accuracy(m.confusion) : 0.0;
    m.f1 = per_class_f1(m.confusion);
}

Tensor<float> batch_probs_rows(const Tensor<float>& probs, std::size_t n) {
    Tensor<float> out({static_cast<int>(n), kNumClasses});
    std::copy_n(probs.ptr(), n * kNumClasses, out.ptr());
    return out;
}

}  // namespace

EpochMetrics evaluate(PairNet<float>& net, const std::vector<AssemblyGraph>& graphs, const LossWeights& weights,
                      std::size_t chunk) {
    EpochMetrics m;
    double loss_sum = 0;
    long long samples = 0;
    for (const auto& g : graphs) {
        const AssemblyGraph predicted = infer(g, net, chunk);
        const std::vector<int> truth = truth_classes(g);
        Tensor<float> probs({static_cast<int>(g.edge_count()), kNumClasses});
        for (std::size_t e = 0; e < g.edge_count(); ++e) {
            std::copy_n(predicted.edge_labels()[e].begin(), kNumClasses, probs.ptr() + e * kNumClasses);
            m.confusion.add(label_from_index(truth[e]), (*predicted.predicted())[e]);
        }
        loss_sum += weighted_ce(probs, std::span<const int>(truth), weights) * static_cast<double>(g.edge_count());
        samples += static_cast<long long>(g.edge_count());
    }
    finish_metrics(m, loss_sum, samples);
    return m;
}

TrainResult train(const std::vector<AssemblyGraph>& train_graphs, const std::vector<AssemblyGraph>& val_graphs,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    if (train_graphs.empty()) throw Error(ErrorKind::invalid_argument, "training split is empty");

    PairNet<float> net(ModelParams<float>::init(config.net, mix_seed(config.seed, 0x1417)));
    if (config.precision == Precision::f16) {
        for (auto* p : net.params().parameters()) {
            for (float& v : p->value.data) v = round_to_half(v);
        }
    }
    AdamOptimizer adam(config, net.params());
    net.params().zero_grad();

    TrainResult result;
    double best_score = -1.0;
    std::vector<std::size_t> image_order(train_graphs.size());
    std::iota(image_order.begin(), image_order.end(), std::size_t{0});

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        Rng epoch_rng(mix_seed(config.seed, static_cast<std::uint64_t>(epoch)));
        epoch_rng.shuffle(std::span<std::size_t>(image_order));

        EpochRecord record;
        record.epoch = epoch;
        double loss_sum = 0;
        long long samples = 0;
        for (std::size_t gi : image_order) {
            const AssemblyGraph& g = train_graphs[gi];
            const std::vector<int> truth = truth_classes(g);
            std::vector<std::size_t> edges(g.edge_count());
            std::iota(edges.begin(), edges.end(), std::size_t{0});
            Rng edge_rng(mix_seed(mix_seed(config.seed, static_cast<std::uint64_t>(epoch)), gi + 1));
            edge_rng.shuffle(std::span<std::size_t>(edges));

            for (std::size_t first = 0; first < edges.size(); first += static_cast<std::size_t>(config.batch_size)) {
                const std::size_t n = std::min(static_cast<std::size_t>(config.batch_size), edges.size() - first);
                const std::span<const std::size_t> batch_edges(edges.data() + first, n);
                std::vector<int> batch_truth(n);
                for (std::size_t i = 0; i < n; ++i) batch_truth[i] = truth[batch_edges[i]];

                const Tensor<float> probs = net.forward(junction_batch(g, batch_edges), Mode::train);
                const Tensor<float> rows = batch_probs_rows(probs, n);
                loss_sum += weighted_ce(rows, std::span<const int>(batch_truth), config.weights) * static_cast<double>(n);
                samples += static_cast<long long>(n);
                for (std::size_t i = 0; i < n; ++i) {
                    LabelRow row;
                    std::copy_n(rows.ptr() + i * kNumClasses, kNumClasses, row.begin());
                    record.train.confusion.add(label_from_index(batch_truth[i]), argmax_label(row));
                }
                net.backward_logits(weighted_ce_logit_grad(rows, std::span<const int>(batch_truth), config.weights));
                adam.step();
            }
        }
        finish_metrics(record.train, loss_sum, samples);

        double score;
        if (!val_graphs.empty()) {
            record.val = evaluate(net, val_graphs, config.weights, config.eval_chunk);
            score = record.val->balanced_accuracy;
        } else {
            score = static_cast<double>(epoch);
        }
        if (score > best_score) {
            best_score = score;
            result.best = net.params();
            result.best_epoch = epoch;
        }
        result.history.push_back(record);
        if (on_epoch && !on_epoch(record, net.params())) break;
    }
    result.final = net.params();
    result.best.zero_grad();
    result.final.zero_grad();
    return result;
}

std::vector<AssemblyGraph> load_split(const DatasetManifest& manifest, Split split, const GridSpec& spec) {
    std::vector<AssemblyGraph> graphs;
    for (const auto& path : manifest.paths(split)) {
        const Image img = read_png(path);
        graphs.push_back(ground_truth_graph(resize_and_split(img, spec, std::filesystem::path(path).stem().string()), spec));
    }
    return graphs;
}

TrainResult train(const DatasetManifest& manifest, const TrainConfig& config, const GridSpec& spec,
                  const EpochCallback& on_epoch) {
    if (manifest.count(Split::train) == 0) throw Error(ErrorKind::invalid_argument, "training split is empty");
    return train(load_split(manifest, Split::train, spec), load_split(manifest, Split::val, spec), config, on_epoch);
}

std::string history_csv(const std::vector<EpochRecord>& history) {
    std::ostringstream os;
    os << "epoch,split,loss,balanced_accuracy,f1_1,f1_2,f1_3,f1_4,f1_5\n";
    auto row = [&os](int epoch, const char* split, const EpochMetrics& m) {
        char buf[64];
        os << epoch << ',' << split;
        std::snprintf(buf, sizeof buf, ",%.6f,%.6f", m.loss, m.balanced_accuracy);
        os << buf;
        for (double f : m.f1) {
            std::snprintf(buf, sizeof buf, ",%.6f", f);
            os << buf;
        }
        os << '\n';
    };
    for (const auto& r : history) {
        row(r.epoch, "train", r.train);
        if (r.val) row(r.epoch, "val", *r.val);
    }
    return os.str();
}

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    out << history_csv(history);
    if (!out) throw Error(ErrorKind::io, "short write to " + path.string());
}

void keep_heap_buffers() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_MAX, 0);
    mallopt(M_TRIM_THRESHOLD, std::numeric_limits<int>::max());
#endif
}

}  // namespace docrecon
