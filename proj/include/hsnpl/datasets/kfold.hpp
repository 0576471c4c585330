#pragma once

#include "hsnpl/core/errors.hpp"
#include "hsnpl/core/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace hsnpl::datasets {

struct Fold {
    std::vector<std::size_t> train; // sorted
    std::vector<std::size_t> test;  // sorted
};

/// Stratified k-fold split over user indices 0..labels.size()-1. Each class
/// is shuffled and dealt round-robin, continuing the deal across classes so
/// fold sizes differ by at most one.
inline std::vector<Fold> kfold_split(std::span<const int> labels, std::size_t n_folds, std::uint64_t seed) {
    if (n_folds < 2) throw ValidationError("n_folds must be at least 2");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    for (const auto& [label, idx] : by_class)
        if (idx.size() < n_folds)
            throw ValidationError("n_folds " + std::to_string(n_folds) + " exceeds the " + std::to_string(idx.size()) +
                                  " users of class " + std::to_string(label));

    std::vector<std::vector<std::size_t>> test(n_folds);
    std::size_t next = 0;
    for (auto& [label, idx] : by_class) {
        Rng rng(derive_seed(seed, {0x6b666f6c64ULL, static_cast<std::uint64_t>(label)}));
        rng.shuffle(idx);
        for (auto i : idx) {
            test[next].push_back(i);
            next = (next + 1) % n_folds;
        }
    }
    std::vector<Fold> folds(n_folds);
    for (std::size_t f = 0; f < n_folds; ++f) {
        std::sort(test[f].begin(), test[f].end());
        folds[f].test = test[f];
        for (std::size_t g = 0; g < n_folds; ++g)
            if (g != f) folds[f].train.insert(folds[f].train.end(), test[g].begin(), test[g].end());
        std::sort(folds[f].train.begin(), folds[f].train.end());
    }
    return folds;
}

/// Splits `indices` into (kept, holdout) with roughly `fraction` of every
/// class held out, at least one per class when the class has two or more
/// members.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_holdout(std::span<const std::size_t> indices,
                                                                                         std::span<const int> labels, double fraction,
                                                                                         std::uint64_t seed) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (auto i : indices) by_class[labels[i]].push_back(i);
    std::vector<std::size_t> kept, held;
    for (auto& [label, idx] : by_class) {
        Rng rng(derive_seed(seed, {0x686f6c64ULL, static_cast<std::uint64_t>(label)}));
        rng.shuffle(idx);
        std::size_t n_hold = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
        if (fraction > 0.0 && n_hold == 0 && idx.size() >= 2) n_hold = 1;
        n_hold = std::min(n_hold, idx.size() > 0 ? idx.size() - 1 : 0);
        held.insert(held.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_hold));
        kept.insert(kept.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_hold), idx.end());
    }
    std::sort(kept.begin(), kept.end());
    std::sort(held.begin(), held.end());
    return {kept, held};
}

} // namespace hsnpl::datasets
