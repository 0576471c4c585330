#pragma once

#include "hsnpl/datasets/records.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <span>

namespace hsnpl::datasets {

/// Per-dimension min/max of the count-valued behavior sub-vectors
/// (time distribution, original/retweet counts, follow counts).
struct BehaviorStats {
    std::array<double, 24> time_min{}, time_max{};
    std::array<double, 2> retweet_min{}, retweet_max{};
    std::array<double, 2> follow_min{}, follow_max{};

    /// Fits on the given records (the training split).
    static BehaviorStats fit(std::span<const UserRecord> records, std::span<const std::size_t> indices) {
        BehaviorStats s;
        constexpr double inf = std::numeric_limits<double>::infinity();
        s.time_min.fill(inf);
        s.time_max.fill(-inf);
        s.retweet_min.fill(inf);
        s.retweet_max.fill(-inf);
        s.follow_min.fill(inf);
        s.follow_max.fill(-inf);
        auto update = [](auto& lo, auto& hi, const auto& v) {
            for (std::size_t i = 0; i < v.size(); ++i) {
                lo[i] = std::min(lo[i], v[i]);
                hi[i] = std::max(hi[i], v[i]);
            }
        };
        for (auto idx : indices) {
            const auto& b = records[idx].behavior;
            update(s.time_min, s.time_max, b.time_distribution);
            update(s.retweet_min, s.retweet_max, b.original_retweet_counts);
            update(s.follow_min, s.follow_max, b.follow_counts);
        }
        if (indices.empty()) {
            s.time_min.fill(0.0);
            s.time_max.fill(0.0);
            s.retweet_min.fill(0.0);
            s.retweet_max.fill(0.0);
            s.follow_min.fill(0.0);
            s.follow_max.fill(0.0);
        }
        return s;
    }
};

/// Min-max scales count-valued sub-vectors into [0, 1] (values outside the
/// fitted range are clipped); ratio sub-vectors pass through. A dimension
/// with min == max maps to 0.
inline BehaviorFeatures normalize_behavior(const BehaviorFeatures& raw, const BehaviorStats& stats) {
    BehaviorFeatures out = raw;
    auto scale = [](auto& v, const auto& lo, const auto& hi) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double range = hi[i] - lo[i];
            v[i] = range > 0.0 ? std::clamp((v[i] - lo[i]) / range, 0.0, 1.0) : 0.0;
        }
    };
    scale(out.time_distribution, stats.time_min, stats.time_max);
    scale(out.original_retweet_counts, stats.retweet_min, stats.retweet_max);
    scale(out.follow_counts, stats.follow_min, stats.follow_max);
    return out;
}

} // namespace hsnpl::datasets
