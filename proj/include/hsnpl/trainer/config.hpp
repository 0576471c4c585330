#pragma once

#include "hsnpl/core/errors.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

namespace hsnpl::trainer {

struct TrainConfig {
    double learning_rate = 0.01;
    double momentum = 0.8;
    std::size_t batch_size = 64;
    std::size_t epochs = 1000;
    double dropout = 0.8;
    std::size_t hidden_width = 512; // q
    std::size_t layers = 2;         // L
    std::size_t heads = 6;          // M
    double negative_sampling_rate = 1.0;
    double entity_threshold = 0.5;
    double alpha_cl = 1.0;
    double beta_sub = 1.0;
    double l2_coeff = 1e-4;   // eta
    bool squared_l2 = false;  // eta * ||theta||^2 instead of eta * ||theta||
    std::size_t patience = 50;
    std::uint64_t seed = 0;
    std::size_t n_folds = 5;
    double validation_fraction = 0.1;

    bool disable_dual_attention = false;
    bool disable_contrastive = false;
    bool disable_subgraph_attention = false;
    bool disable_prompt_features = false;
    bool disable_semantic_features = false;
    bool disable_behavior_features = false;

    void validate() const {
        auto non_negative = [](double v, const char* name) {
            if (!(v >= 0.0)) throw ValidationError(std::string(name) + " must be non-negative");
        };
        non_negative(learning_rate, "learning_rate");
        non_negative(momentum, "momentum");
        non_negative(negative_sampling_rate, "negative_sampling_rate");
        non_negative(alpha_cl, "alpha_cl");
        non_negative(beta_sub, "beta_sub");
        non_negative(l2_coeff, "l2_coeff");
        non_negative(validation_fraction, "validation_fraction");
        if (dropout < 0.0 || dropout >= 1.0) throw ValidationError("dropout must lie in [0, 1)");
        if (momentum >= 1.0) throw ValidationError("momentum must be below 1");
        if (validation_fraction >= 1.0) throw ValidationError("validation_fraction must be below 1");
        if (hidden_width == 0) throw ValidationError("hidden_width must be positive");
        if (heads == 0) throw ValidationError("heads must be positive");
        if (n_folds < 2) throw ValidationError("n_folds must be at least 2");
        if (entity_threshold < -1.0 || entity_threshold > 1.0) throw ValidationError("entity_threshold must lie in [-1, 1]");
    }
};

#define HSNPL_CONFIG_FIELDS(X)                                                                                                        \
    X(learning_rate)                                                                                                                  \
    X(momentum)                                                                                                                       \
    X(batch_size)                                                                                                                     \
    X(epochs)                                                                                                                         \
    X(dropout)                                                                                                                        \
    X(hidden_width)                                                                                                                   \
    X(layers)                                                                                                                         \
    X(heads)                                                                                                                          \
    X(negative_sampling_rate)                                                                                                         \
    X(entity_threshold)                                                                                                               \
    X(alpha_cl)                                                                                                                       \
    X(beta_sub)                                                                                                                       \
    X(l2_coeff)                                                                                                                       \
    X(squared_l2)                                                                                                                     \
    X(patience)                                                                                                                       \
    X(seed)                                                                                                                           \
    X(n_folds)                                                                                                                        \
    X(validation_fraction)                                                                                                            \
    X(disable_dual_attention)                                                                                                         \
    X(disable_contrastive)                                                                                                            \
    X(disable_subgraph_attention)                                                                                                     \
    X(disable_prompt_features)                                                                                                        \
    X(disable_semantic_features)                                                                                                      \
    X(disable_behavior_features)

inline nlohmann::json to_json(const TrainConfig& c) {
    nlohmann::json j;
#define HSNPL_WRITE(f) j[#f] = c.f;
    HSNPL_CONFIG_FIELDS(HSNPL_WRITE)
#undef HSNPL_WRITE
    return j;
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline TrainConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("config must be a JSON object");
    static const std::set<std::string> known = {
#define HSNPL_NAME(f) #f,
        HSNPL_CONFIG_FIELDS(HSNPL_NAME)
#undef HSNPL_NAME
    };
    for (const auto& [key, value] : j.items())
        if (!known.contains(key)) throw ValidationError("unknown config key \"" + key + "\"");
    TrainConfig c;
    try {
#define HSNPL_READ(f) \
    if (j.contains(#f)) j.at(#f).get_to(c.f);
        HSNPL_CONFIG_FIELDS(HSNPL_READ)
#undef HSNPL_READ
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("bad config value: ") + e.what());
    }
    c.validate();
    return c;
}

inline TrainConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config " + path.string());
    try {
        return config_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("malformed config " + path.string() + ": " + e.what());
    }
}

/// Ablation switches, by config field name.
inline const std::vector<std::string>& ablation_flags() {
    static const std::vector<std::string> flags = {"disable_dual_attention",  "disable_contrastive",       "disable_subgraph_attention",
                                                   "disable_prompt_features", "disable_semantic_features", "disable_behavior_features"};
    return flags;
}

inline void set_flag(TrainConfig& c, const std::string& flag) {
    if (flag == "disable_dual_attention") c.disable_dual_attention = true;
    else if (flag == "disable_contrastive") c.disable_contrastive = true;
    else if (flag == "disable_subgraph_attention") c.disable_subgraph_attention = true;
    else if (flag == "disable_prompt_features") c.disable_prompt_features = true;
    else if (flag == "disable_semantic_features") c.disable_semantic_features = true;
    else if (flag == "disable_behavior_features") c.disable_behavior_features = true;
    else throw ValidationError("unknown ablation flag \"" + flag + "\"");
}

} // namespace hsnpl::trainer
