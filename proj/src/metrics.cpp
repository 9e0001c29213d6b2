#include "docrecon/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "docrecon/error.hpp"

namespace docrecon {

long long Confusion::total() const {
    long long n = 0;
    for (const auto& row : counts) {
        for (long long v : row) n += v;
    }
    return n;
}

Confusion& Confusion::operator+=(const Confusion& other) {
    for (int t = 0; t < kNumClasses; ++t) {
        for (int p = 0; p < kNumClasses; ++p) counts[t][p] += other.counts[t][p];
    }
    return *this;
}

double balanced_accuracy(const Confusion& c) {
    double sum = 0;
    int classes = 0;
    for (int t = 0; t < kNumClasses; ++t) {
        long long row = 0;
        for (long long v : c.counts[t]) row += v;
        if (row == 0) continue;
        sum += static_cast<double>(c.counts[t][t]) / static_cast<double>(row);
        ++classes;
    }
    if (classes == 0) throw Error(ErrorKind::invalid_argument, "balanced accuracy of an empty confusion matrix");
    return sum / classes;
}

std::array<double, kNumClasses> per_class_f1(const Confusion& c) {
    std::array<double, kNumClasses> f1{};
    for (int k = 0; k < kNumClasses; ++k) {
        long long truth = 0, predicted = 0;
        for (int j = 0; j < kNumClasses; ++j) {
            truth += c.counts[k][j];
            predicted += c.counts[j][k];
        }
        const double tp = static_cast<double>(c.counts[k][k]);
        const double precision = predicted ? tp / predicted : 0.0;
        const double recall = truth ? tp / truth : 0.0;
        f1[k] = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    }
    return f1;
}

void LossWeights::validate() const {
    for (double v : w) {
        if (!(v > 0)) throw Error(ErrorKind::invalid_argument, "loss weights must be positive");
    }
}

namespace {

template <typename T>
void check_probability_rows(const Tensor<T>& pred) {
    if (pred.rank() != 2 || pred.dim(1) != kNumClasses) {
        throw Error(ErrorKind::shape_mismatch, "predictions must be [B,5], got " + shape_string(pred.shape));
    }
    for (int b = 0; b < pred.dim(0); ++b) {
        double s = 0;
        for (int k = 0; k < kNumClasses; ++k) s += pred.data[static_cast<size_t>(b) * kNumClasses + k];
        if (std::fabs(s - 1.0) > 1e-3) {
            throw Error(ErrorKind::invalid_argument, "prediction row " + std::to_string(b) + " sums to " +
                                                         std::to_string(s) + ", not 1");
        }
    }
}

}  // namespace

template <typename T>
double weighted_ce(const Tensor<T>& pred, std::span<const int> truth, const LossWeights& w) {
    check_probability_rows(pred);
    const int B = pred.dim(0);
    if (static_cast<int>(truth.size()) != B) throw Error(ErrorKind::shape_mismatch, "truth length differs from batch");
    if (B == 0) return 0.0;
    double loss = 0;
    for (int b = 0; b < B; ++b) {
        const int c = truth[b];
        const double p = pred.data[static_cast<size_t>(b) * kNumClasses + c];
        loss -= w[c] * std::log(std::max(p, 1e-12));
    }
    return loss / B;
}

template <typename T>
double weighted_ce(const Tensor<T>& pred, const Tensor<T>& truth, const LossWeights& w) {
    require_shape(truth.shape, pred.shape, "weighted_ce truth");
    std::vector<int> classes(static_cast<size_t>(truth.dim(0)));
    for (size_t b = 0; b < classes.size(); ++b) {
        LabelRow row;
        for (int k = 0; k < kNumClasses; ++k) row[k] = static_cast<float>(truth.data[b * kNumClasses + k]);
        classes[b] = class_index(argmax_label(row));
    }
    return weighted_ce(pred, std::span<const int>(classes), w);
}

template <typename T>
Tensor<T> weighted_ce_logit_grad(const Tensor<T>& probs, std::span<const int> truth, const LossWeights& w) {
    const int B = probs.dim(0);
    if (static_cast<int>(truth.size()) != B) throw Error(ErrorKind::shape_mismatch, "truth length differs from batch");
    Tensor<T> g(probs.shape);
    for (int b = 0; b < B; ++b) {
        const int c = truth[b];
        const double scale = w[c] / B;
        for (int k = 0; k < kNumClasses; ++k) {
            const size_t i = static_cast<size_t>(b) * kNumClasses + k;
            g.data[i] = static_cast<T>(scale * (probs.data[i] - (k == c ? 1.0 : 0.0)));
        }
    }
    return g;
}

template double weighted_ce(const Tensor<float>&, const Tensor<float>&, const LossWeights&);
template double weighted_ce(const Tensor<double>&, const Tensor<double>&, const LossWeights&);
template double weighted_ce(const Tensor<float>&, std::span<const int>, const LossWeights&);
template double weighted_ce(const Tensor<double>&, std::span<const int>, const LossWeights&);
template Tensor<float> weighted_ce_logit_grad(const Tensor<float>&, std::span<const int>, const LossWeights&);
template Tensor<double> weighted_ce_logit_grad(const Tensor<double>&, std::span<const int>, const LossWeights&);

}  // namespace docrecon
