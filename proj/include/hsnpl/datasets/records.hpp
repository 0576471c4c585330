#pragma once

// User feature records and the JSONL/JSON interchange format:
//
//   records.jsonl  one object per line: user_id, label, post_embedding,
//                  sds_answers, topic_ids, entity_ids, behavior{...}
//                  (optional: post_text)
//   vocab.json     {"topics": {id: [floats]}, "entities": {id: [floats]}}
//   manifest.json  {d_post, n_topics, n_entities, entity_threshold,
//                   class_counts, seed}

#include "hsnpl/core/errors.hpp"
#include "hsnpl/sds/scale.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace hsnpl::datasets {

using json = nlohmann::json;

struct BehaviorFeatures {
    static constexpr std::size_t kDims = 36;

    std::array<double, 24> time_distribution{};
    std::array<double, 3> emoticon_ratio{};
    std::array<double, 3> sentiment_word_ratio{};
    std::array<double, 2> original_retweet_counts{};
    std::array<double, 2> follow_counts{};
    std::array<double, 2> first_person_ratio{};

    /// Flattened in field order (24 + 3 + 3 + 2 + 2 + 2).
    [[nodiscard]] std::array<double, kDims> flatten() const {
        std::array<double, kDims> out{};
        std::size_t k = 0;
        auto put = [&](const auto& a) {
            for (double x : a) out[k++] = x;
        };
        put(time_distribution);
        put(emoticon_ratio);
        put(sentiment_word_ratio);
        put(original_retweet_counts);
        put(follow_counts);
        put(first_person_ratio);
        return out;
    }

    friend bool operator==(const BehaviorFeatures&, const BehaviorFeatures&) = default;
};

struct UserRecord {
    std::string user_id;
    int label = 0; // 1 = depressed
    std::vector<double> post_embedding;
    std::array<int, sds::kItemCount> sds_answers{};
    std::vector<std::string> topic_ids;  // sorted, unique
    std::vector<std::string> entity_ids; // sorted, unique
    BehaviorFeatures behavior;
    std::string post_text; // optional; consumed by the SDS mapper only
};

struct Vocabulary {
    std::map<std::string, std::vector<double>> topics;
    std::map<std::string, std::vector<double>> entities;
};

struct DatasetManifest {
    std::size_t d_post = 768;
    std::size_t n_topics = 0;
    std::size_t n_entities = 0;
    double entity_threshold = 0.5;
    std::map<int, std::size_t> class_counts;
    std::optional<std::uint64_t> seed;
};

struct Dataset {
    std::vector<UserRecord> records;
    Vocabulary vocab;
    DatasetManifest manifest;

    [[nodiscard]] std::vector<int> labels() const {
        std::vector<int> out;
        out.reserve(records.size());
        for (const auto& r : records) out.push_back(r.label);
        return out;
    }
};

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline json behavior_to_json(const BehaviorFeatures& b) {
    return {{"time_distribution", b.time_distribution},
            {"emoticon_ratio", b.emoticon_ratio},
            {"sentiment_word_ratio", b.sentiment_word_ratio},
            {"original_retweet_counts", b.original_retweet_counts},
            {"follow_counts", b.follow_counts},
            {"first_person_ratio", b.first_person_ratio}};
}

inline json record_to_json(const UserRecord& r) {
    json j = {{"user_id", r.user_id},
              {"label", r.label},
              {"post_embedding", r.post_embedding},
              {"sds_answers", r.sds_answers},
              {"topic_ids", r.topic_ids},
              {"entity_ids", r.entity_ids},
              {"behavior", behavior_to_json(r.behavior)}};
    if (!r.post_text.empty()) j["post_text"] = r.post_text;
    return j;
}

inline json vocab_to_json(const Vocabulary& v) { return {{"topics", v.topics}, {"entities", v.entities}}; }

inline json manifest_to_json(const DatasetManifest& m) {
    json counts = json::object();
    for (const auto& [label, n] : m.class_counts) counts[std::to_string(label)] = n;
    json j = {{"d_post", m.d_post},
              {"n_topics", m.n_topics},
              {"n_entities", m.n_entities},
              {"entity_threshold", m.entity_threshold},
              {"class_counts", counts}};
    j["seed"] = m.seed ? json(*m.seed) : json(nullptr);
    return j;
}

/// Writes records.jsonl, vocab.json and manifest.json into `dir`.
/// nlohmann::json prints doubles with the shortest representation that
/// parses back to the same bits.
inline void save_dataset(const Dataset& d, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "records.jsonl", std::ios::binary);
        if (!out) throw ValidationError("cannot write " + (dir / "records.jsonl").string());
        for (const auto& r : d.records) out << record_to_json(r).dump() << '\n';
    }
    {
        std::ofstream out(dir / "vocab.json", std::ios::binary);
        out << vocab_to_json(d.vocab).dump() << '\n';
    }
    {
        std::ofstream out(dir / "manifest.json", std::ios::binary);
        out << manifest_to_json(d.manifest).dump(2) << '\n';
    }
}

namespace detail {

template <std::size_t N>
std::array<double, N> read_fixed(const json& j, const char* field) {
    if (!j.is_array() || j.size() != N)
        throw ValidationError(std::string("behavior.") + field + " must have " + std::to_string(N) + " entries");
    std::array<double, N> out{};
    for (std::size_t i = 0; i < N; ++i) out[i] = j[i].get<double>();
    return out;
}

inline std::vector<std::string> read_id_set(const json& j, const char* field) {
    if (!j.is_array()) throw ValidationError(std::string(field) + " must be an array");
    std::set<std::string> ids;
    for (const auto& e : j) ids.insert(e.get<std::string>());
    return {ids.begin(), ids.end()};
}

inline json parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

} // namespace detail

inline BehaviorFeatures behavior_from_json(const json& j) {
    BehaviorFeatures b;
    b.time_distribution = detail::read_fixed<24>(j.at("time_distribution"), "time_distribution");
    b.emoticon_ratio = detail::read_fixed<3>(j.at("emoticon_ratio"), "emoticon_ratio");
    b.sentiment_word_ratio = detail::read_fixed<3>(j.at("sentiment_word_ratio"), "sentiment_word_ratio");
    b.original_retweet_counts = detail::read_fixed<2>(j.at("original_retweet_counts"), "original_retweet_counts");
    b.follow_counts = detail::read_fixed<2>(j.at("follow_counts"), "follow_counts");
    b.first_person_ratio = detail::read_fixed<2>(j.at("first_person_ratio"), "first_person_ratio");
    for (double x : b.time_distribution)
        if (x < 0.0) throw ValidationError("behavior.time_distribution must be non-negative");
    for (double x : b.original_retweet_counts)
        if (x < 0.0) throw ValidationError("behavior.original_retweet_counts must be non-negative");
    for (double x : b.follow_counts)
        if (x < 0.0) throw ValidationError("behavior.follow_counts must be non-negative");
    return b;
}

/// Parses one record and checks its self-contained invariants. Vocabulary
/// membership and embedding width are checked by validate_record.
inline UserRecord record_from_json(const json& j) {
    try {
        UserRecord r;
        r.user_id = j.at("user_id").get<std::string>();
        r.label = j.at("label").get<int>();
        if (r.label != 0 && r.label != 1) throw ValidationError("label must be 0 or 1, got " + std::to_string(r.label));
        r.post_embedding = j.at("post_embedding").get<std::vector<double>>();
        const auto& sds = j.at("sds_answers");
        if (!sds.is_array() || sds.size() != sds::kItemCount)
            throw ValidationError("sds_answers length " + std::to_string(sds.is_array() ? sds.size() : 0) + " ≠ 20");
        for (std::size_t i = 0; i < sds::kItemCount; ++i) {
            const int v = sds[i].get<int>();
            if (v < 1 || v > 4)
                throw ValidationError("sds_answers[" + std::to_string(i) + "] = " + std::to_string(v) + " outside {1,2,3,4}");
            r.sds_answers[i] = v;
        }
        r.topic_ids = detail::read_id_set(j.at("topic_ids"), "topic_ids");
        r.entity_ids = detail::read_id_set(j.at("entity_ids"), "entity_ids");
        r.behavior = behavior_from_json(j.at("behavior"));
        if (j.contains("post_text")) r.post_text = j.at("post_text").get<std::string>();
        return r;
    } catch (const json::exception& e) {
        throw ValidationError(e.what());
    }
}

inline void validate_record(const UserRecord& r, const Vocabulary& vocab, std::size_t d_post) {
    if (r.post_embedding.size() != d_post)
        throw ValidationError("post_embedding length " + std::to_string(r.post_embedding.size()) + " does not match d_post " +
                              std::to_string(d_post));
    for (const auto& t : r.topic_ids)
        if (!vocab.topics.contains(t)) throw ValidationError("unknown topic id \"" + t + "\"");
    for (const auto& e : r.entity_ids)
        if (!vocab.entities.contains(e)) throw ValidationError("unknown entity id \"" + e + "\"");
}

inline Vocabulary vocab_from_json(const json& j, std::size_t d_post) {
    Vocabulary v;
    try {
        v.topics = j.at("topics").get<std::map<std::string, std::vector<double>>>();
        v.entities = j.at("entities").get<std::map<std::string, std::vector<double>>>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed vocabulary: ") + e.what());
    }
    for (const auto& [id, emb] : v.topics)
        if (emb.size() != d_post) throw ValidationError("topic \"" + id + "\" embedding length " + std::to_string(emb.size()) + " ≠ d_post");
    for (const auto& [id, emb] : v.entities)
        if (emb.size() != d_post) throw ValidationError("entity \"" + id + "\" embedding length " + std::to_string(emb.size()) + " ≠ d_post");
    return v;
}

inline DatasetManifest manifest_from_json(const json& j) {
    DatasetManifest m;
    try {
        m.d_post = j.at("d_post").get<std::size_t>();
        m.n_topics = j.at("n_topics").get<std::size_t>();
        m.n_entities = j.at("n_entities").get<std::size_t>();
        m.entity_threshold = j.at("entity_threshold").get<double>();
        for (const auto& [k, v] : j.at("class_counts").items()) m.class_counts[std::stoi(k)] = v.get<std::size_t>();
        if (j.contains("seed") && !j.at("seed").is_null()) m.seed = j.at("seed").get<std::uint64_t>();
    } catch (const std::exception& e) {
        throw ValidationError(std::string("malformed manifest: ") + e.what());
    }
    if (m.entity_threshold < -1.0 || m.entity_threshold > 1.0) throw ValidationError("manifest entity_threshold outside [-1, 1]");
    return m;
}

/// Loads and validates a dataset. Errors carry the offending line number for
/// record problems.
inline Dataset load_dataset(const std::filesystem::path& records_path, const std::filesystem::path& vocab_path,
                            const std::filesystem::path& manifest_path) {
    Dataset d;
    d.manifest = manifest_from_json(detail::parse_file(manifest_path));
    d.vocab = vocab_from_json(detail::parse_file(vocab_path), d.manifest.d_post);
    if (d.vocab.topics.size() != d.manifest.n_topics)
        throw ValidationError("manifest n_topics " + std::to_string(d.manifest.n_topics) + " but vocabulary has " +
                              std::to_string(d.vocab.topics.size()));
    if (d.vocab.entities.size() != d.manifest.n_entities)
        throw ValidationError("manifest n_entities " + std::to_string(d.manifest.n_entities) + " but vocabulary has " +
                              std::to_string(d.vocab.entities.size()));

    std::ifstream in(records_path);
    if (!in) throw ValidationError("cannot open " + records_path.string());
    std::set<std::string> ids;
    std::map<int, std::size_t> counts;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = records_path.filename().string() + " line " + std::to_string(line_no) + ": ";
        try {
            json j;
            try {
                j = json::parse(line);
            } catch (const json::parse_error& e) {
                throw ValidationError(std::string("malformed JSON (") + e.what() + ")");
            }
            UserRecord r = record_from_json(j);
            validate_record(r, d.vocab, d.manifest.d_post);
            if (!ids.insert(r.user_id).second) throw ValidationError("duplicate user_id \"" + r.user_id + "\"");
            ++counts[r.label];
            d.records.push_back(std::move(r));
        } catch (const ValidationError& e) {
            throw ValidationError(where + e.what());
        }
    }
    for (int label : {0, 1}) {
        const auto declared = d.manifest.class_counts.contains(label) ? d.manifest.class_counts.at(label) : 0;
        const auto actual = counts.contains(label) ? counts.at(label) : 0;
        if (declared != actual)
            throw ValidationError("manifest declares " + std::to_string(declared) + " users with label " + std::to_string(label) +
                                  " but records contain " + std::to_string(actual));
    }
    return d;
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
    return load_dataset(dir / "records.jsonl", dir / "vocab.json", dir / "manifest.json");
}

} // namespace hsnpl::datasets
