#pragma once

#include <array>
#include <utility>
#include <vector>

#include "docrecon/metrics.hpp"

namespace testutil {

// Enumerates ordered cell pairs by (row, col) deltas.
inline std::array<long long, 5> brute_force_counts(int rows, int cols) {
    std::array<long long, 5> n{};
    for (int s = 0; s < rows * cols; ++s) {
        for (int t = 0; t < rows * cols; ++t) {
            if (s == t) continue;
            const int dr = t / cols - s / cols;
            const int dc = t % cols - s % cols;
            if (dr == -1 && dc == 0) ++n[0];
            else if (dr == 1 && dc == 0) ++n[1];
            else if (dr == 0 && dc == -1) ++n[2];
            else if (dr == 0 && dc == 1) ++n[3];
            else ++n[4];
        }
    }
    return n;
}

// Brute force over an explicit list of (truth, predicted) samples.
struct Samples {
    std::vector<std::pair<int, int>> items;
    explicit Samples(const docrecon::Confusion& c) {
        for (int t = 0; t < 5; ++t)
            for (int p = 0; p < 5; ++p)
                for (long long k = 0; k < c.counts[t][p]; ++k) items.emplace_back(t, p);
    }
    double balanced_accuracy() const {
        double sum = 0;
        int present = 0;
        for (int c = 0; c < 5; ++c) {
            long long truth = 0, hit = 0;
            for (auto [t, p] : items) {
                if (t == c) {
                    ++truth;
                    if (p == c) ++hit;
                }
            }
            if (truth == 0) continue;
            sum += static_cast<double>(hit) / static_cast<double>(truth);
            ++present;
        }
        return sum / present;
    }
    double f1(int c) const {
        long long tp = 0, fp = 0, fn = 0;
        for (auto [t, p] : items) {
            if (t == c && p == c) ++tp;
            else if (p == c) ++fp;
            else if (t == c) ++fn;
        }
        const double precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        const double recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        return precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    }
};

// Random confusion matrix with some empty cells; never all zero.
template <typename Rng>
docrecon::Confusion random_confusion(Rng& rng) {
    docrecon::Confusion c;
    for (auto& row : c.counts)
        for (auto& v : row) v = rng.uniform() < 0.2 ? 0 : static_cast<long long>(rng.below(40));
    if (c.total() == 0) c.counts[0][0] = 1;
    return c;
}

}  // namespace testutil
