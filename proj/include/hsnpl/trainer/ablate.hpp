#pragma once

#include "hsnpl/trainer/train.hpp"

#include <cstdio>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace hsnpl::trainer {

struct AblationRow {
    std::string variant; // "full" or flags joined by '+'
    std::string label;
    MetricsReport metrics;
};

inline std::string ablation_label(const std::string& flag) {
    if (flag == "disable_dual_attention") return "w/o dual attention";
    if (flag == "disable_contrastive") return "w/o contrastive learning";
    if (flag == "disable_subgraph_attention") return "w/o subgraph attention";
    if (flag == "disable_prompt_features") return "w/o prompt features";
    if (flag == "disable_semantic_features") return "w/o semantic features";
    if (flag == "disable_behavior_features") return "w/o behavior features";
    return flag;
}

/// Parses "a,b+c" into combinations {{a}, {b, c}}.
inline std::vector<std::vector<std::string>> parse_flag_list(const std::string& text) {
    std::vector<std::vector<std::string>> out;
    std::stringstream ss(text);
    std::string combo;
    while (std::getline(ss, combo, ',')) {
        if (combo.empty()) continue;
        std::vector<std::string> flags;
        std::stringstream cs(combo);
        std::string f;
        while (std::getline(cs, f, '+'))
            if (!f.empty()) {
                TrainConfig probe;
                set_flag(probe, f);
                flags.push_back(f);
            }
        out.push_back(std::move(flags));
    }
    return out;
}

/// Full model first, then one row per flag combination.
inline std::vector<AblationRow> ablate(const datasets::Dataset& d, const TrainConfig& base,
                                       const std::vector<std::vector<std::string>>& combinations) {
    std::vector<AblationRow> rows;
    rows.push_back({"full", "full model", train(d, base).test_metrics});
    for (const auto& combo : combinations) {
        TrainConfig c = base;
        std::string variant, label;
        for (const auto& f : combo) {
            set_flag(c, f);
            variant += (variant.empty() ? "" : "+") + f;
            label += (label.empty() ? "" : ", ") + ablation_label(f);
        }
        rows.push_back({variant, label, train(d, c).test_metrics});
    }
    return rows;
}

inline void write_ablation_csv(const std::vector<AblationRow>& rows, std::ostream& out) {
    out << "variant,label,precision,recall,f1,accuracy\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f", r.metrics.precision, r.metrics.recall, r.metrics.f1, r.metrics.accuracy);
        out << r.variant << ",\"" << r.label << "\"," << buf << '\n';
    }
}

} // namespace hsnpl::trainer
