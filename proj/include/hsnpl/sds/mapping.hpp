#pragma once

#include "hsnpl/core/errors.hpp"
#include "hsnpl/sds/scale.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hsnpl::sds {

/// Joins post text and symptom template.
inline constexpr std::string_view kPromptSeparator = " [SEP] ";

struct DegreeAnswer {
    int item = 0;   // 1..20
    int degree = 0; // 1..4 -> Rarely, Sometimes, Often, Always

    friend bool operator==(const DegreeAnswer&, const DegreeAnswer&) = default;
};

struct SymptomVector {
    std::array<double, kDegreeCount> raw{};
    std::array<double, kDegreeCount> normalized{};
};

/// "post [SEP] template". An empty post yields "[SEP] template". The [mask]
/// slot is left in place for the backend.
inline std::string render_prompt(std::string_view post_text, const SdsItem& item) {
    std::string out;
    if (post_text.empty()) {
        out = std::string(kPromptSeparator.substr(1));
    } else {
        out.reserve(post_text.size() + kPromptSeparator.size() + item.text().size());
        out.append(post_text);
        out.append(kPromptSeparator);
    }
    out.append(item.text());
    return out;
}

/// Sums, per degree k, the scores of the items answered with degree k, then
/// normalizes to a distribution. Requires exactly one answer per item.
inline SymptomVector aggregate_scores(std::span<const DegreeAnswer> answers, const SdsScale& scale = SdsScale::standard()) {
    std::array<int, kItemCount> seen{};
    for (const auto& a : answers) {
        if (a.item < 1 || a.item > static_cast<int>(kItemCount))
            throw ValidationError("answer refers to item " + std::to_string(a.item) + " outside 1..20");
        ++seen[static_cast<std::size_t>(a.item - 1)];
    }
    std::string missing, duplicate;
    for (std::size_t j = 0; j < kItemCount; ++j) {
        if (seen[j] == 0) missing += (missing.empty() ? "" : ",") + std::to_string(j + 1);
        if (seen[j] > 1) duplicate += (duplicate.empty() ? "" : ",") + std::to_string(j + 1);
    }
    if (!missing.empty() || !duplicate.empty()) {
        std::string msg = "SDS answers incomplete:";
        if (!missing.empty()) msg += " missing items [" + missing + "]";
        if (!duplicate.empty()) msg += " duplicate items [" + duplicate + "]";
        throw ValidationError(msg);
    }

    SymptomVector v;
    for (const auto& a : answers) v.raw[static_cast<std::size_t>(a.degree - 1)] += scale.item(a.item).score(a.degree);
    double total = 0.0;
    for (double f : v.raw) total += f;
    for (std::size_t k = 0; k < kDegreeCount; ++k) v.normalized[k] = v.raw[k] / total;
    return v;
}

/// Convenience for the record format, which stores answers as 20 degrees in
/// item order.
inline SymptomVector aggregate_degrees(std::span<const int> degrees, const SdsScale& scale = SdsScale::standard()) {
    if (degrees.size() != kItemCount)
        throw ValidationError("sds_answers length " + std::to_string(degrees.size()) + " ≠ 20");
    std::vector<DegreeAnswer> answers;
    for (std::size_t j = 0; j < degrees.size(); ++j) answers.push_back({static_cast<int>(j + 1), degrees[j]});
    return aggregate_scores(answers, scale);
}

/// Masked-answer backend: picks a degree for one rendered prompt.
class AnswerBackend {
public:
    virtual ~AnswerBackend() = default;
    virtual DegreeAnswer answer(std::string_view post_text, std::span<const double> post_embedding, const SdsItem& item,
                                std::string_view prompt) const = 0;
    [[nodiscard]] virtual std::string name() const = 0;
};

/// Hash-driven backend: FNV-1a over (seed, prompt, embedding bytes). A
/// fixture table, when given, overrides the hash for listed items.
class DeterministicMock final : public AnswerBackend {
public:
    explicit DeterministicMock(std::uint64_t seed = 0, std::map<int, int> fixture = {}, std::optional<int> default_degree = {})
        : seed_(seed), fixture_(std::move(fixture)), default_degree_(default_degree) {
        for (const auto& [item, degree] : fixture_)
            if (degree < 1 || degree > kDegreeCount) throw ValidationError("fixture degree outside 1..4 for item " + std::to_string(item));
        if (default_degree_ && (*default_degree_ < 1 || *default_degree_ > kDegreeCount))
            throw ValidationError("fixture default degree outside 1..4");
    }

    /// Backend that answers `degree` for every item.
    static DeterministicMock constant(int degree) { return DeterministicMock(0, {}, degree); }

    DegreeAnswer answer(std::string_view, std::span<const double> post_embedding, const SdsItem& item,
                        std::string_view prompt) const override {
        if (auto it = fixture_.find(item.index()); it != fixture_.end()) return {item.index(), it->second};
        if (default_degree_) return {item.index(), *default_degree_};
        std::uint64_t h = 0xcbf29ce484222325ULL;
        auto feed = [&h](const void* data, std::size_t n) {
            const auto* p = static_cast<const unsigned char*>(data);
            for (std::size_t i = 0; i < n; ++i) {
                h ^= p[i];
                h *= 0x100000001b3ULL;
            }
        };
        for (int b = 0; b < 8; ++b) {
            const unsigned char byte = static_cast<unsigned char>((seed_ >> (8 * b)) & 0xFF);
            feed(&byte, 1);
        }
        feed(prompt.data(), prompt.size());
        for (double x : post_embedding) {
            std::uint64_t bits;
            std::memcpy(&bits, &x, sizeof bits);
            for (int b = 0; b < 8; ++b) {
                const unsigned char byte = static_cast<unsigned char>((bits >> (8 * b)) & 0xFF);
                feed(&byte, 1);
            }
        }
        h ^= h >> 33;
        return {item.index(), static_cast<int>(h % kDegreeCount) + 1};
    }

    [[nodiscard]] std::string name() const override { return "mock"; }

private:
    std::uint64_t seed_;
    std::map<int, int> fixture_;
    std::optional<int> default_degree_;
};

struct AuditEntry {
    int item = 0;
    std::string prompt;
    int degree = 0;
    int score = 0;
};

struct UserMapping {
    std::vector<DegreeAnswer> answers;
    SymptomVector symptoms;
    std::vector<AuditEntry> audit;
};

/// Renders every item, asks the backend, and aggregates.
inline UserMapping map_user(std::string_view post_text, std::span<const double> post_embedding, const SdsScale& scale,
                            const AnswerBackend& backend) {
    UserMapping out;
    for (const auto& item : scale.items()) {
        const std::string prompt = render_prompt(post_text, item);
        DegreeAnswer a;
        try {
            a = backend.answer(post_text, post_embedding, item, prompt);
        } catch (const std::exception& e) {
            throw std::runtime_error("SDS backend '" + backend.name() + "' failed on item " + std::to_string(item.index()) + ": " + e.what());
        }
        if (a.item != item.index() || a.degree < 1 || a.degree > kDegreeCount)
            throw ValidationError("SDS backend returned an invalid answer for item " + std::to_string(item.index()));
        out.answers.push_back(a);
        out.audit.push_back({item.index(), prompt, a.degree, item.score(a.degree)});
    }
    out.symptoms = aggregate_scores(out.answers, scale);
    return out;
}

inline nlohmann::json audit_line(std::string_view user_id, const AuditEntry& e) {
    return {{"user_id", std::string(user_id)},
            {"item", e.item},
            {"prompt", e.prompt},
            {"degree", e.degree},
            {"answer", std::string(kAnswerWords[static_cast<std::size_t>(e.degree - 1)])},
            {"score", e.score}};
}

} // namespace hsnpl::sds
