#pragma once

// Synthetic datasets with a tunable planted class signal s in [0, 1]. At
// s = 0 both classes are drawn from the same distributions; as s grows the
// positive class separates on every feature family the model consumes.

#include "hsnpl/core/errors.hpp"
#include "hsnpl/core/rng.hpp"
#include "hsnpl/datasets/records.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

namespace hsnpl::datasets {

struct SynthConfig {
    std::size_t n_users = 200;
    double balance = 0.5; // fraction of positive users
    std::size_t n_topics = 15;
    std::size_t n_entities = 60;
    std::size_t d_post = 768;
    double signal = 1.0;
    double noise_scale = 1.0;
    /// Distance between class means of the post embeddings at s = 1, in
    /// units of noise_scale.
    double separation = 8.0;
    std::size_t entity_clusters = 6;
    std::size_t max_topics_per_user = 3;
    std::size_t max_entities_per_user = 3;
    double entity_threshold = 0.5;
    std::size_t n_folds = 5;
};

namespace detail {

inline std::string padded_id(char prefix, std::size_t i, int width) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%c%0*zu", prefix, width, i);
    return buf;
}

inline std::vector<double> random_unit(Rng& rng, std::size_t d) {
    std::vector<double> v(d);
    double norm = 0.0;
    for (auto& x : v) {
        x = rng.normal();
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
}

/// Draws up to `count` distinct ids: each draw comes from `own_pool` with
/// probability s, otherwise from all ids.
inline std::vector<std::string> draw_ids(Rng& rng, const std::vector<std::string>& all, const std::vector<std::string>& own_pool,
                                         std::size_t count, double s) {
    std::set<std::string> picked;
    for (std::size_t k = 0; k < count; ++k) {
        const auto& src = (!own_pool.empty() && rng.bernoulli(s)) ? own_pool : all;
        picked.insert(src[static_cast<std::size_t>(rng.below(src.size()))]);
    }
    return {picked.begin(), picked.end()};
}

} // namespace detail

/// Pure function of (config, seed).
inline Dataset generate_synthetic(const SynthConfig& cfg, std::uint64_t seed) {
    if (cfg.n_users < 2 * cfg.n_folds)
        throw ValidationError("n_users " + std::to_string(cfg.n_users) + " is below 2 x n_folds (" + std::to_string(2 * cfg.n_folds) +
                              "); refusing to generate");
    if (cfg.signal < 0.0 || cfg.signal > 1.0) throw ValidationError("signal must lie in [0, 1]");
    if (cfg.balance <= 0.0 || cfg.balance >= 1.0) throw ValidationError("balance must lie in (0, 1)");
    if (cfg.n_topics == 0 || cfg.n_entities == 0 || cfg.d_post == 0) throw ValidationError("topics, entities and d_post must be positive");

    Rng rng(seed);
    const double s = cfg.signal;
    const std::size_t d = cfg.d_post;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    Dataset out;

    // Topics: the first half is biased toward the positive class.
    std::vector<std::string> topic_ids, pos_topics, neg_topics;
    const std::size_t pos_topic_count = (cfg.n_topics + 1) / 2;
    for (std::size_t t = 0; t < cfg.n_topics; ++t) {
        auto id = detail::padded_id('t', t, 3);
        std::vector<double> emb(d);
        for (auto& x : emb) x = rng.normal() * inv_sqrt_d;
        out.vocab.topics[id] = std::move(emb);
        (t < pos_topic_count ? pos_topics : neg_topics).push_back(id);
        topic_ids.push_back(std::move(id));
    }
    if (neg_topics.empty()) neg_topics = pos_topics;

    // Entities: clustered around a few random directions so that entities of
    // one cluster exceed the cosine threshold. The first half of the clusters
    // is biased toward the positive class.
    const std::size_t clusters = std::max<std::size_t>(1, std::min(cfg.entity_clusters, cfg.n_entities));
    std::vector<std::vector<double>> centers;
    for (std::size_t c = 0; c < clusters; ++c) centers.push_back(detail::random_unit(rng, d));
    std::vector<std::string> entity_ids, pos_entities, neg_entities;
    const std::size_t pos_clusters = (clusters + 1) / 2;
    for (std::size_t e = 0; e < cfg.n_entities; ++e) {
        const std::size_t c = e % clusters;
        auto id = detail::padded_id('e', e, 4);
        std::vector<double> emb(d);
        for (std::size_t i = 0; i < d; ++i) emb[i] = 2.0 * centers[c][i] + rng.normal() * inv_sqrt_d;
        out.vocab.entities[id] = std::move(emb);
        (c < pos_clusters ? pos_entities : neg_entities).push_back(id);
        entity_ids.push_back(std::move(id));
    }
    if (neg_entities.empty()) neg_entities = pos_entities;

    // Class means of the post embeddings: +/- (s * separation / 2) along u.
    const auto direction = detail::random_unit(rng, d);
    const double half_gap = 0.5 * s * cfg.separation * cfg.noise_scale;

    std::vector<int> labels(cfg.n_users, 0);
    const auto n_pos = static_cast<std::size_t>(std::llround(cfg.balance * static_cast<double>(cfg.n_users)));
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_pos), 1);
    rng.shuffle(labels);

    const auto& scale = sds::SdsScale::standard();
    const int id_width = cfg.n_users > 9999 ? 6 : 4;
    for (std::size_t u = 0; u < cfg.n_users; ++u) {
        UserRecord r;
        r.user_id = detail::padded_id('u', u, id_width);
        r.label = labels[u];
        const bool pos = r.label == 1;
        const double sign = pos ? 1.0 : -1.0;

        r.post_embedding.resize(d);
        for (std::size_t i = 0; i < d; ++i) r.post_embedding[i] = sign * half_gap * direction[i] + cfg.noise_scale * rng.normal();

        // Positive users answer severe with probability s; everyone else at random.
        for (std::size_t j = 0; j < sds::kItemCount; ++j) {
            int degree;
            if (pos && rng.bernoulli(s)) {
                const int high = 3 + static_cast<int>(rng.below(2));
                degree = scale.items()[j].reversed() ? 5 - high : high;
            } else {
                degree = 1 + static_cast<int>(rng.below(4));
            }
            r.sds_answers[j] = degree;
        }

        const std::size_t nt = 1 + static_cast<std::size_t>(rng.below(cfg.max_topics_per_user));
        r.topic_ids = detail::draw_ids(rng, topic_ids, pos ? pos_topics : neg_topics, nt, s);
        const std::size_t ne = 1 + static_cast<std::size_t>(rng.below(cfg.max_entities_per_user));
        r.entity_ids = detail::draw_ids(rng, entity_ids, pos ? pos_entities : neg_entities, ne, s);

        auto& b = r.behavior;
        const std::size_t n_tweets = 50 + static_cast<std::size_t>(rng.below(150));
        std::array<double, 24> hour_weight{};
        for (std::size_t h = 0; h < 24; ++h) {
            const bool night = h < 6;
            hour_weight[h] = (h >= 8 && h <= 22) ? 2.0 : 0.6;
            if (pos && night) hour_weight[h] += 3.0 * s;
        }
        for (std::size_t k = 0; k < n_tweets; ++k) b.time_distribution[rng.categorical(hour_weight)] += 1.0;

        auto proportions = [&rng](std::array<double, 3> w, double usage) {
            std::array<double, 3> p{};
            double total = 0.0;
            for (std::size_t i = 0; i < 3; ++i) {
                w[i] *= rng.uniform(0.5, 1.5);
                total += w[i];
            }
            for (std::size_t i = 0; i < 3; ++i) p[i] = usage * w[i] / total;
            return p;
        };
        b.emoticon_ratio = proportions({1.0, 1.0, 1.0}, rng.uniform(0.2, 0.8));
        b.sentiment_word_ratio = proportions({1.0, pos ? 1.0 + 3.0 * s : 1.0, 1.0}, rng.uniform(0.3, 0.9));

        const double original = std::round(static_cast<double>(n_tweets) * rng.uniform(0.4, 0.9));
        b.original_retweet_counts = {original, static_cast<double>(n_tweets) - original};
        b.follow_counts = {static_cast<double>(50 + rng.below(500)), static_cast<double>(20 + rng.below(800))};
        b.first_person_ratio = {rng.uniform(0.02, 0.08) + (pos ? 0.05 * s : 0.0), rng.uniform(0.01, 0.05)};

        out.records.push_back(std::move(r));
    }

    out.manifest.d_post = d;
    out.manifest.n_topics = cfg.n_topics;
    out.manifest.n_entities = cfg.n_entities;
    out.manifest.entity_threshold = cfg.entity_threshold;
    out.manifest.class_counts = {{0, cfg.n_users - n_pos}, {1, n_pos}};
    out.manifest.seed = seed;
    return out;
}

} // namespace hsnpl::datasets
