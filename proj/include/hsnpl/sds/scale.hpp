#pragma once

// The rewritten 20-item self-rating depression scale: one masked template per
// symptom, a reversed flag, and the degree -> score table.

#include "hsnpl/core/errors.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstddef>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace hsnpl::sds {

inline constexpr std::size_t kItemCount = 20;
inline constexpr int kDegreeCount = 4;
inline constexpr std::string_view kMaskToken = "[mask]";

/// Verbalizer words, indexed by degree - 1.
inline constexpr std::array<std::string_view, kDegreeCount> kAnswerWords = {"Rarely", "Sometimes", "Often", "Always"};

inline std::size_t count_occurrences(std::string_view text, std::string_view token) {
    std::size_t n = 0;
    for (auto pos = text.find(token); pos != std::string_view::npos; pos = text.find(token, pos + token.size())) ++n;
    return n;
}

class SdsItem {
public:
    SdsItem(int index, std::string tmpl, bool reversed) : index_(index), template_(std::move(tmpl)), reversed_(reversed) {
        const auto masks = count_occurrences(template_, kMaskToken);
        if (masks != 1)
            throw ValidationError("SDS item " + std::to_string(index_) + ": template must contain exactly one [mask], found " +
                                  std::to_string(masks));
        for (int k = 1; k <= kDegreeCount; ++k) scores_[static_cast<std::size_t>(k - 1)] = reversed_ ? 5 - k : k;
    }

    [[nodiscard]] int index() const { return index_; }
    [[nodiscard]] const std::string& text() const { return template_; }
    [[nodiscard]] bool reversed() const { return reversed_; }

    /// Score for degree k in 1..4.
    [[nodiscard]] int score(int degree) const {
        if (degree < 1 || degree > kDegreeCount)
            throw ValidationError("SDS item " + std::to_string(index_) + ": degree " + std::to_string(degree) + " outside 1..4");
        return scores_[static_cast<std::size_t>(degree - 1)];
    }
    [[nodiscard]] const std::array<int, kDegreeCount>& scores() const { return scores_; }

private:
    int index_;
    std::string template_;
    bool reversed_;
    std::array<int, kDegreeCount> scores_{};
};

class SdsScale {
public:
    explicit SdsScale(std::vector<SdsItem> items, std::string version = "1") : items_(std::move(items)), version_(std::move(version)) {
        if (items_.size() != kItemCount)
            throw ValidationError("SDS scale must have " + std::to_string(kItemCount) + " items, got " + std::to_string(items_.size()));
        for (std::size_t j = 0; j < items_.size(); ++j)
            if (items_[j].index() != static_cast<int>(j + 1))
                throw ValidationError("SDS scale items must be numbered 1..20 in order");
    }

    /// The standard scale with the rewritten templates.
    static const SdsScale& standard() {
        static const SdsScale scale = [] {
            struct Row { const char* text; bool reversed; };
            static constexpr Row rows[kItemCount] = {
                {"I [mask] feel down hearted and blue.", false},
                {"Morning is when I [mask] feel the best.", true},
                {"I [mask] have crying spells or feel like it.", false},
                {"I [mask] have trouble sleeping at night.", false},
                {"I [mask] eat as much as I used to.", true},
                {"I [mask] enjoy sex.", true},
                {"I [mask] notice that I am losing weight.", false},
                {"I [mask] have trouble with constipation.", false},
                {"My heart [mask] beats faster than usual.", false},
                {"I [mask] get tired for no reason.", false},
                {"My mind is [mask] as clear as it used to be.", true},
                {"I [mask] find it easy to do the things I used to.", true},
                {"I am [mask] restless and can't keep still.", false},
                {"I [mask] feel hopeful about the future.", true},
                {"I am [mask] more irritable than usual.", false},
                {"I [mask] find it easy to make decisions.", true},
                {"I [mask] feel that I am useful and needed.", true},
                {"My life is [mask] pretty full.", true},
                {"I [mask] feel that others would be better off if I were dead.", false},
                {"I [mask] enjoy the things I used to do.", true},
            };
            std::vector<SdsItem> items;
            for (std::size_t j = 0; j < kItemCount; ++j) items.emplace_back(static_cast<int>(j + 1), rows[j].text, rows[j].reversed);
            return SdsScale(std::move(items));
        }();
        return scale;
    }

    [[nodiscard]] const std::vector<SdsItem>& items() const { return items_; }
    [[nodiscard]] const SdsItem& item(int index) const {
        if (index < 1 || index > static_cast<int>(kItemCount)) throw ValidationError("SDS item index " + std::to_string(index) + " outside 1..20");
        return items_[static_cast<std::size_t>(index - 1)];
    }
    [[nodiscard]] const std::string& version() const { return version_; }

    [[nodiscard]] nlohmann::json to_json() const {
        nlohmann::json j;
        j["version"] = version_;
        j["answers"] = nlohmann::json::array();
        for (auto w : kAnswerWords) j["answers"].push_back(std::string(w));
        j["items"] = nlohmann::json::array();
        for (const auto& it : items_)
            j["items"].push_back({{"index", it.index()}, {"template", it.text()}, {"reversed", it.reversed()}, {"scores", it.scores()}});
        return j;
    }

    /// Parses a serialized scale. The score table in the file must agree with
    /// the reversed flag (forward k, reversed 5 - k).
    static SdsScale from_json(const nlohmann::json& j) {
        try {
            std::vector<SdsItem> items;
            for (const auto& e : j.at("items")) {
                SdsItem item(e.at("index").get<int>(), e.at("template").get<std::string>(), e.at("reversed").get<bool>());
                if (e.contains("scores") && e.at("scores").get<std::array<int, kDegreeCount>>() != item.scores())
                    throw ValidationError("SDS item " + std::to_string(item.index()) + ": score table disagrees with reversed flag");
                items.push_back(std::move(item));
            }
            return SdsScale(std::move(items), j.value("version", std::string("1")));
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(std::string("malformed SDS scale: ") + e.what());
        }
    }

    static SdsScale load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ValidationError("cannot open SDS scale file " + path);
        try {
            return from_json(nlohmann::json::parse(in));
        } catch (const nlohmann::json::parse_error& e) {
            throw ValidationError("malformed SDS scale " + path + ": " + e.what());
        }
    }

private:
    std::vector<SdsItem> items_;
    std::string version_;
};

} // namespace hsnpl::sds
