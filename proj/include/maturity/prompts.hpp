#pragma once

#include <cctype>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "maturity/errors.hpp"
#include "maturity/policy.hpp"

namespace maturity {

enum class PromptKind { Content, Intensity, Rating, Caption };

inline std::string_view prompt_kind_label(PromptKind kind) {
    switch (kind) {
        case PromptKind::Content: return "content";
        case PromptKind::Intensity: return "intensity";
        case PromptKind::Rating: return "rating";
        case PromptKind::Caption: return "caption";
    }
    throw PromptError("invalid PromptKind");
}

struct PromptText {
    std::string text;
    PromptKind kind = PromptKind::Content;
    bool expects_image = true;
};

struct ParsedContentResponse {
    std::vector<ContentCategory> categories;  // deduplicated, sorted by id, never empty
    std::string raw;
};

namespace detail {

// "Cartoon or fantasy violence" -> "Cartoon or Fantasy Violence", matching
// how the policy prints reasons in running text.
inline std::string title_case_label(std::string_view label) {
    static const std::set<std::string, std::less<>> small_words = {"a",  "an", "and", "in",
                                                                   "of", "or", "the", "to"};
    std::string out;
    out.reserve(label.size());
    std::string word;
    auto flush = [&] {
        if (word.empty()) return;
        std::string bare = word;
        while (!bare.empty() && !std::isalpha(static_cast<unsigned char>(bare.back())))
            bare.pop_back();
        const bool keep_lower = out.find(' ') != std::string::npos &&
                                small_words.count(bare) > 0;
        if (!keep_lower && std::isalpha(static_cast<unsigned char>(word[0])))
            word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
        out += word;
        word.clear();
    };
    for (char c : label) {
        if (c == ' ') {
            flush();
            out += c;
        } else {
            word += c;
        }
    }
    flush();
    return out;
}

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

inline bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

// Case-insensitive phrase search with word boundaries on both ends.
inline bool contains_phrase(const std::string& lower_haystack, std::string_view phrase) {
    const std::string needle = to_lower(phrase);
    size_t pos = lower_haystack.find(needle);
    while (pos != std::string::npos) {
        const bool left_ok = pos == 0 || !is_word_char(lower_haystack[pos - 1]);
        const size_t end = pos + needle.size();
        const bool right_ok = end >= lower_haystack.size() || !is_word_char(lower_haystack[end]);
        if (left_ok && right_ok) return true;
        pos = lower_haystack.find(needle, pos + 1);
    }
    return false;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

// P_MC: enumerate the policy vocabulary and ask for matching ids only.
// Categories are listed by id, so tables loaded with reordered rules render
// the same prompt.
inline PromptText render_content_prompt(const PolicyTable& table) {
    (void)table;  // vocabulary is fixed; the table pins which policy is active
    std::ostringstream out;
    out << "You are reviewing a mobile app screenshot for an app store.\n"
        << "Which of the following maturity contents appear in the screenshot image?\n";
    for (const auto& category : categories())
        out << category.id << ". " << category.label << "\n";
    out << "Respond with the matching ID number(s) only (ID from 0 to 11), "
           "comma-separated. If no mature content is present, respond with 0.";
    return PromptText{out.str(), PromptKind::Content, true};
}

// P_MI: the intensity template with the category name substituted, plus a
// strict one-word answer instruction so decoding stays mechanical.
inline PromptText render_intensity_prompt(const ContentCategory& category) {
    if (!category.intensity_sensitive)
        throw PromptError("category \"" + category.label +
                          "\" has no intensity grade");
    std::ostringstream out;
    out << "Please response the maturity level of content: "
        << detail::title_case_label(category.label)
        << ", ranging from mild to intense in the screenshot image. "
           "Answer with exactly one word: \"mild\" or \"intense\".";
    return PromptText{out.str(), PromptKind::Intensity, true};
}

// P_MR: embeds the description and refers to the attached screenshot(s)
// when any are sent along.
inline PromptText render_rating_prompt(const std::string& description,
                                       int screenshot_count) {
    std::ostringstream out;
    if (screenshot_count >= 2) {
        out << "Review the " << screenshot_count
            << " attached screenshot images and the app description below.\n";
    } else if (screenshot_count == 1) {
        out << "Review the attached screenshot image and the app description below.\n";
    } else {
        out << "Review the app description below.\n";
    }
    out << "Classify the app into one of four age-appropriate categories: "
           "4+, 9+, 12+, or 17+.\n\n"
        << "App description:\n"
        << (description.empty() ? "(no description provided)" : description) << "\n\n"
        << "Answer with exactly one of: \"4+\", \"9+\", \"12+\", \"17+\".";
    return PromptText{out.str(), PromptKind::Rating, screenshot_count >= 1};
}

// Caption request for the image-caption fusion strategy. Deliberately free of
// any age or policy vocabulary so the caption cannot leak the task.
inline PromptText render_caption_prompt() {
    return PromptText{
        "Write a one-paragraph factual caption of the attached screenshot image. "
        "Describe only what is visible on screen, without speculation.",
        PromptKind::Caption, true};
}

// ---------------------------------------------------------------------------
// Response decoding
// ---------------------------------------------------------------------------

// Decodes a content response: standalone ids 0-11 first, falling back to
// case-insensitive label matches. "None" is dropped when anything else was
// detected. Throws UnparseableError when nothing matches.
inline ParsedContentResponse parse_content_response(const std::string& raw,
                                                    const PolicyTable& table) {
    (void)table;
    std::set<int> ids;

    size_t i = 0;
    while (i < raw.size()) {
        if (std::isdigit(static_cast<unsigned char>(raw[i]))) {
            const size_t start = i;
            while (i < raw.size() && std::isdigit(static_cast<unsigned char>(raw[i]))) ++i;
            const bool left_ok =
                start == 0 || !detail::is_word_char(raw[start - 1]);
            const bool right_ok = i >= raw.size() || !detail::is_word_char(raw[i]);
            if (left_ok && right_ok && i - start <= 2) {
                const int value = std::stoi(raw.substr(start, i - start));
                if (value >= 0 && value < kCategoryCount) ids.insert(value);
            }
        } else {
            ++i;
        }
    }

    if (ids.empty()) {
        const std::string lowered = detail::to_lower(raw);
        for (const auto& category : categories())
            if (detail::contains_phrase(lowered, category.label)) ids.insert(category.id);
    }

    if (ids.empty()) throw UnparseableError(raw);
    if (ids.size() > 1) ids.erase(0);

    ParsedContentResponse parsed;
    parsed.raw = raw;
    for (int id : ids) parsed.categories.push_back(category_by_id(id));
    return parsed;
}

inline IntensityLevel parse_intensity_response(const std::string& raw) {
    const std::string lowered = detail::to_lower(raw);
    const bool mild = lowered.find("mild") != std::string::npos;
    const bool intense = lowered.find("intense") != std::string::npos;
    if (mild && !intense) return IntensityLevel::Mild;
    if (intense && !mild) return IntensityLevel::Intense;
    throw UnparseableError(raw);
}

// First standalone rating token wins; bare "17" etc. accepted at end of text
// or before punctuation.
inline RatingLevel parse_rating_response(const std::string& raw) {
    size_t i = 0;
    while (i < raw.size()) {
        if (!std::isdigit(static_cast<unsigned char>(raw[i]))) {
            ++i;
            continue;
        }
        const size_t start = i;
        while (i < raw.size() && std::isdigit(static_cast<unsigned char>(raw[i]))) ++i;
        const bool left_ok = start == 0 || !detail::is_word_char(raw[start - 1]);
        if (!left_ok) continue;

        const std::string digits = raw.substr(start, i - start);
        const auto rating = rating_from_label(digits + "+");
        if (!rating) continue;

        if (i < raw.size() && raw[i] == '+') return *rating;

        // Bare number: accept at (effective) end or before punctuation.
        size_t j = i;
        while (j < raw.size() && std::isspace(static_cast<unsigned char>(raw[j]))) ++j;
        if (j >= raw.size() && i == raw.size()) return *rating;
        if (j >= raw.size() && j > i) return *rating;  // trailing whitespace only
        if (i < raw.size() && std::ispunct(static_cast<unsigned char>(raw[i]))) return *rating;
    }
    throw UnparseableError(raw);
}

}  // namespace maturity
