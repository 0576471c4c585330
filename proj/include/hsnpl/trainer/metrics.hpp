#pragma once

#include <nlohmann/json.hpp>

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace hsnpl::trainer {

/// Binary confusion counts with label 1 as the positive class.
struct Confusion {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

    [[nodiscard]] std::size_t total() const { return tp + fp + fn + tn; }
    [[nodiscard]] double precision() const { return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp); }
    [[nodiscard]] double recall() const { return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn); }
    [[nodiscard]] double f1() const {
        const double p = precision(), r = recall();
        return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    }
    [[nodiscard]] double accuracy() const {
        return total() == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(total());
    }
};

inline Confusion confusion(std::span<const int> predicted, std::span<const int> actual) {
    if (predicted.size() != actual.size()) throw std::invalid_argument("confusion: size mismatch");
    Confusion c;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i] == 1 && actual[i] == 1) ++c.tp;
        else if (predicted[i] == 1) ++c.fp;
        else if (actual[i] == 1) ++c.fn;
        else ++c.tn;
    }
    return c;
}

struct FoldMetrics {
    double precision = 0.0, recall = 0.0, f1 = 0.0, accuracy = 0.0;
    Confusion counts;
    std::size_t best_epoch = 0;

    static FoldMetrics from(const Confusion& c, std::size_t best_epoch = 0) {
        return {c.precision(), c.recall(), c.f1(), c.accuracy(), c, best_epoch};
    }
};

struct MetricsReport {
    std::vector<FoldMetrics> folds;
    double precision = 0.0, recall = 0.0, f1 = 0.0, accuracy = 0.0;

    void finalize() {
        precision = recall = f1 = accuracy = 0.0;
        if (folds.empty()) return;
        for (const auto& f : folds) {
            precision += f.precision;
            recall += f.recall;
            f1 += f.f1;
            accuracy += f.accuracy;
        }
        const auto n = static_cast<double>(folds.size());
        precision /= n;
        recall /= n;
        f1 /= n;
        accuracy /= n;
    }

    [[nodiscard]] nlohmann::json to_json() const {
        nlohmann::json j;
        j["mean"] = {{"precision", precision}, {"recall", recall}, {"f1", f1}, {"accuracy", accuracy}};
        j["folds"] = nlohmann::json::array();
        for (std::size_t k = 0; k < folds.size(); ++k) {
            const auto& f = folds[k];
            j["folds"].push_back({{"fold", k},
                                  {"precision", f.precision},
                                  {"recall", f.recall},
                                  {"f1", f.f1},
                                  {"accuracy", f.accuracy},
                                  {"best_epoch", f.best_epoch},
                                  {"confusion", {{"tp", f.counts.tp}, {"fp", f.counts.fp}, {"fn", f.counts.fn}, {"tn", f.counts.tn}}}});
        }
        return j;
    }
};

} // namespace hsnpl::trainer
