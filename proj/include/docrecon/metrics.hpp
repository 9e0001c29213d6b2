#pragma once

#include <array>
#include <span>

#include "docrecon/graph.hpp"
#include "docrecon/tensor.hpp"

namespace docrecon {

// counts[truth][predicted].
struct Confusion {
    std::array<std::array<long long, kNumClasses>, kNumClasses> counts{};

    void add(RelationLabel truth, RelationLabel predicted, long long n = 1) {
        counts[class_index(truth)][class_index(predicted)] += n;
    }
    long long total() const;
    Confusion& operator+=(const Confusion& other);
    bool operator==(const Confusion&) const = default;
};

// Mean per-class recall over classes that have at least one true sample.
double balanced_accuracy(const Confusion& c);

// One-vs-all F1 per class; 0 where precision + recall is 0.
std::array<double, kNumClasses> per_class_f1(const Confusion& c);

struct LossWeights {
    std::array<double, kNumClasses> w = {0.8, 0.8, 0.8, 0.8, 0.1};

    double operator[](int c) const { return w[static_cast<std::size_t>(c)]; }
    void validate() const;
};

// Mean over rows of -w[c] * log(max(p[c], 1e-12)) where c is the true class
// (argmax of the one-hot truth row). pred and truth are [B, 5].
template <typename T>
double weighted_ce(const Tensor<T>& pred, const Tensor<T>& truth, const LossWeights& w);

// Same loss with the truth given as class indices.
template <typename T>
double weighted_ce(const Tensor<T>& pred, std::span<const int> truth, const LossWeights& w);

// Gradient of weighted_ce(softmax(z)) with respect to z: w[c] (p - onehot(c)) / B.
template <typename T>
Tensor<T> weighted_ce_logit_grad(const Tensor<T>& probs, std::span<const int> truth, const LossWeights& w);

}  // namespace docrecon
