#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "maturity/errors.hpp"

namespace maturity {

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

// Two graded levels plus a sentinel for categories the policy grades with
// "---" (no intensity column).
enum class IntensityLevel { NotApplicable, Mild, Intense };

enum class RatingLevel { FourPlus, NinePlus, TwelvePlus, SeventeenPlus };

constexpr int kRatingCount = 4;
constexpr int kCategoryCount = 12;
constexpr int kPolicyRuleCount = 21;

inline int rating_rank(RatingLevel r) { return static_cast<int>(r); }

inline std::string_view rating_label(RatingLevel r) {
    switch (r) {
        case RatingLevel::FourPlus: return "4+";
        case RatingLevel::NinePlus: return "9+";
        case RatingLevel::TwelvePlus: return "12+";
        case RatingLevel::SeventeenPlus: return "17+";
    }
    throw PolicyError("invalid RatingLevel");
}

inline std::optional<RatingLevel> rating_from_label(std::string_view label) {
    if (label == "4+") return RatingLevel::FourPlus;
    if (label == "9+") return RatingLevel::NinePlus;
    if (label == "12+") return RatingLevel::TwelvePlus;
    if (label == "17+") return RatingLevel::SeventeenPlus;
    return std::nullopt;
}

inline std::array<RatingLevel, kRatingCount> all_ratings() {
    return {RatingLevel::FourPlus, RatingLevel::NinePlus,
            RatingLevel::TwelvePlus, RatingLevel::SeventeenPlus};
}

inline std::string_view intensity_label(IntensityLevel i) {
    switch (i) {
        case IntensityLevel::NotApplicable: return "na";
        case IntensityLevel::Mild: return "mild";
        case IntensityLevel::Intense: return "intense";
    }
    throw PolicyError("invalid IntensityLevel");
}

inline std::optional<IntensityLevel> intensity_from_label(std::string_view label) {
    if (label == "na") return IntensityLevel::NotApplicable;
    if (label == "mild") return IntensityLevel::Mild;
    if (label == "intense") return IntensityLevel::Intense;
    return std::nullopt;
}

// One of the 12 maturity content reasons, "None" included.
struct ContentCategory {
    int id = 0;
    std::string label;
    bool intensity_sensitive = false;

    bool operator==(const ContentCategory& other) const { return id == other.id; }
};

// The fixed category vocabulary, ids 0-11 in policy row order.
// "None", "Gambling or contests" and "Unrestricted web access" carry no
// intensity grade.
inline const std::array<ContentCategory, kCategoryCount>& categories() {
    static const std::array<ContentCategory, kCategoryCount> table = {{
        {0, "None", false},
        {1, "Cartoon or fantasy violence", true},
        {2, "Horror or fear themed content", true},
        {3, "Profanity or crude humor", true},
        {4, "Mature or suggestive content", true},
        {5, "Sexual content or nudity", true},
        {6, "Realistic violence", true},
        {7, "Alcohol, tobacco, or drug use", true},
        {8, "Medical or treatment-focused content", true},
        {9, "Simulated gambling", true},
        {10, "Gambling or contests", false},
        {11, "Unrestricted web access", false},
    }};
    return table;
}

inline const ContentCategory& category_by_id(int id) {
    if (id < 0 || id >= kCategoryCount)
        throw PolicyError("category id out of range: " + std::to_string(id));
    return categories()[static_cast<size_t>(id)];
}

inline const ContentCategory* find_category_by_label(std::string_view label) {
    for (const auto& c : categories())
        if (c.label == label) return &c;
    return nullptr;
}

// A legal pairing respects the category's intensity sensitivity.
inline bool is_legal_pair(const ContentCategory& category, IntensityLevel intensity) {
    return category.intensity_sensitive == (intensity != IntensityLevel::NotApplicable);
}

// ---------------------------------------------------------------------------
// Policy table
// ---------------------------------------------------------------------------

struct PolicyRule {
    int row = 0;  // 1-21
    ContentCategory category;
    IntensityLevel intensity = IntensityLevel::NotApplicable;
    RatingLevel rating = RatingLevel::FourPlus;
};

struct PolicyTable {
    std::vector<PolicyRule> rules;  // sorted by row
    std::string source;            // file path or "builtin"
};

// Ordering key for findings: rating rank first, policy row breaks ties.
struct SeverityScore {
    int rating_rank = 0;
    int row = 0;

    auto operator<=>(const SeverityScore&) const = default;
};

namespace detail {

inline void validate_policy(const PolicyTable& table) {
    if (table.rules.size() != kPolicyRuleCount)
        throw PolicyError(table.source + ": expected " +
                          std::to_string(kPolicyRuleCount) + " rules, got " +
                          std::to_string(table.rules.size()));

    std::array<bool, kPolicyRuleCount + 1> row_seen{};
    std::array<std::array<bool, 3>, kCategoryCount> pair_seen{};
    for (const auto& rule : table.rules) {
        if (rule.row < 1 || rule.row > kPolicyRuleCount)
            throw PolicyError(table.source + ": row out of range: " +
                              std::to_string(rule.row));
        if (row_seen[static_cast<size_t>(rule.row)])
            throw PolicyError(table.source + ": duplicate row " +
                              std::to_string(rule.row));
        row_seen[static_cast<size_t>(rule.row)] = true;

        if (!is_legal_pair(rule.category, rule.intensity))
            throw PolicyError(table.source + ": illegal intensity for category \"" +
                              rule.category.label + "\" in row " +
                              std::to_string(rule.row));
        auto& seen = pair_seen[static_cast<size_t>(rule.category.id)]
                              [static_cast<size_t>(rule.intensity)];
        if (seen)
            throw PolicyError(table.source + ": duplicate pair (" +
                              rule.category.label + ", " +
                              std::string(intensity_label(rule.intensity)) + ")");
        seen = true;
    }
    for (int row = 1; row <= kPolicyRuleCount; ++row)
        if (!row_seen[static_cast<size_t>(row)])
            throw PolicyError(table.source + ": missing row " + std::to_string(row));

    // 21 unique rows with unique legal pairs over this vocabulary cover
    // every legal pair, so lookups are total.
}

}  // namespace detail

// The App Store table, rows 1-21.
inline PolicyTable builtin_policy() {
    const auto& cat = categories();
    auto rule = [&](int row, int cat_id, IntensityLevel i, RatingLevel r) {
        return PolicyRule{row, cat[static_cast<size_t>(cat_id)], i, r};
    };
    using I = IntensityLevel;
    using R = RatingLevel;
    PolicyTable table;
    table.source = "builtin";
    table.rules = {
        rule(1, 0, I::NotApplicable, R::FourPlus),
        rule(2, 1, I::Mild, R::NinePlus),
        rule(3, 1, I::Intense, R::TwelvePlus),
        rule(4, 2, I::Mild, R::NinePlus),
        rule(5, 2, I::Intense, R::TwelvePlus),
        rule(6, 3, I::Mild, R::NinePlus),
        rule(7, 3, I::Intense, R::TwelvePlus),
        rule(8, 4, I::Mild, R::NinePlus),
        rule(9, 4, I::Intense, R::SeventeenPlus),
        rule(10, 5, I::Mild, R::TwelvePlus),
        rule(11, 5, I::Intense, R::SeventeenPlus),
        rule(12, 6, I::Mild, R::TwelvePlus),
        rule(13, 6, I::Intense, R::SeventeenPlus),
        rule(14, 7, I::Mild, R::TwelvePlus),
        rule(15, 7, I::Intense, R::SeventeenPlus),
        rule(16, 8, I::Mild, R::TwelvePlus),
        rule(17, 8, I::Intense, R::SeventeenPlus),
        rule(18, 9, I::Mild, R::TwelvePlus),
        rule(19, 9, I::Intense, R::SeventeenPlus),
        rule(20, 10, I::NotApplicable, R::SeventeenPlus),
        rule(21, 11, I::NotApplicable, R::SeventeenPlus),
    };
    detail::validate_policy(table);
    return table;
}

// Loads a policy definition document:
//   {"rules": [{"row": 2, "category": "Cartoon or fantasy violence",
//               "intensity": "mild", "rating": "9+"}, ...]}
// Labels must match the vocabulary exactly; intensity is "mild"/"intense"/"na".
inline PolicyTable load_policy(const nlohmann::json& doc, std::string source = "document") {
    PolicyTable table;
    table.source = std::move(source);

    if (!doc.is_object() || !doc.contains("rules") || !doc["rules"].is_array())
        throw PolicyError(table.source + ": malformed document, expected {\"rules\": [...]}");

    for (const auto& entry : doc["rules"]) {
        if (!entry.is_object() || !entry.contains("row") || !entry.contains("category") ||
            !entry.contains("intensity") || !entry.contains("rating"))
            throw PolicyError(table.source +
                              ": malformed rule, expected {row, category, intensity, rating}");
        if (!entry["row"].is_number_integer())
            throw PolicyError(table.source + ": rule row must be an integer");

        PolicyRule rule;
        rule.row = entry["row"].get<int>();

        const auto label = entry["category"].get<std::string>();
        const ContentCategory* category = find_category_by_label(label);
        if (category == nullptr)
            throw PolicyError(table.source + ": unknown category label: \"" + label + "\"");
        rule.category = *category;

        const auto intensity = intensity_from_label(entry["intensity"].get<std::string>());
        if (!intensity)
            throw PolicyError(table.source + ": unknown intensity: \"" +
                              entry["intensity"].get<std::string>() + "\"");
        rule.intensity = *intensity;

        const auto rating = rating_from_label(entry["rating"].get<std::string>());
        if (!rating)
            throw PolicyError(table.source + ": unknown rating: \"" +
                              entry["rating"].get<std::string>() + "\"");
        rule.rating = *rating;

        table.rules.push_back(std::move(rule));
    }

    std::sort(table.rules.begin(), table.rules.end(),
              [](const PolicyRule& a, const PolicyRule& b) { return a.row < b.row; });
    detail::validate_policy(table);
    return table;
}

inline PolicyTable load_policy_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open policy file: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw PolicyError(path + ": malformed JSON: " + e.what());
    }
    return load_policy(doc, path);
}

// ---------------------------------------------------------------------------
// Lookup and combination
// ---------------------------------------------------------------------------

inline const PolicyRule& find_rule(const PolicyTable& table,
                                   const ContentCategory& category,
                                   IntensityLevel intensity) {
    if (!is_legal_pair(category, intensity))
        throw PolicyError("illegal pair: (" + category.label + ", " +
                          std::string(intensity_label(intensity)) + ")");
    for (const auto& rule : table.rules)
        if (rule.category.id == category.id && rule.intensity == intensity) return rule;
    throw PolicyError("no rule for (" + category.label + ", " +
                      std::string(intensity_label(intensity)) + ") in " + table.source);
}

inline RatingLevel lookup_rating(const PolicyTable& table,
                                 const ContentCategory& category,
                                 IntensityLevel intensity) {
    return find_rule(table, category, intensity).rating;
}

inline SeverityScore severity_of(const PolicyTable& table,
                                 const ContentCategory& category,
                                 IntensityLevel intensity) {
    const PolicyRule& rule = find_rule(table, category, intensity);
    return SeverityScore{rating_rank(rule.rating), rule.row};
}

// Max rule: the highest rating detected determines the app's rating.
// No findings means no mature content, i.e. 4+.
inline RatingLevel combine_ratings(std::span<const RatingLevel> ratings) {
    RatingLevel result = RatingLevel::FourPlus;
    for (RatingLevel r : ratings)
        if (rating_rank(r) > rating_rank(result)) result = r;
    return result;
}

inline RatingLevel combine_ratings(const std::vector<RatingLevel>& ratings) {
    return combine_ratings(std::span<const RatingLevel>(ratings));
}

}  // namespace maturity
