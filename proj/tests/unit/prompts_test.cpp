#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "maturity/prompts.hpp"

using namespace maturity;

namespace {

nlohmann::json reversed_policy_json() {
    nlohmann::json rules = nlohmann::json::array();
    const PolicyTable builtin = builtin_policy();
    for (auto it = builtin.rules.rbegin(); it != builtin.rules.rend(); ++it)
        rules.push_back({{"row", it->row},
                         {"category", it->category.label},
                         {"intensity", std::string(intensity_label(it->intensity))},
                         {"rating", std::string(rating_label(it->rating))}});
    return nlohmann::json{{"rules", rules}};
}

}  // namespace

TEST_CASE("content prompt enumerates all categories deterministically") {
    const PolicyTable table = builtin_policy();
    const PromptText prompt = render_content_prompt(table);

    CHECK(prompt.kind == PromptKind::Content);
    CHECK(prompt.expects_image);
    for (const auto& category : categories()) {
        CHECK(prompt.text.find(std::to_string(category.id) + ". " + category.label) !=
              std::string::npos);
    }
    CHECK(prompt.text == render_content_prompt(table).text);

    // Single digit ids only appear in the enumeration; the instruction pins
    // the answer format.
    CHECK(prompt.text.find("comma-separated") != std::string::npos);
}

TEST_CASE("content prompt is independent of rule order in the document") {
    const PromptText from_builtin = render_content_prompt(builtin_policy());
    const PromptText from_reversed =
        render_content_prompt(load_policy(reversed_policy_json(), "reversed"));
    CHECK(from_builtin.text == from_reversed.text);
}

TEST_CASE("intensity prompt substitutes the category in title case") {
    const PromptText prompt =
        render_intensity_prompt(*find_category_by_label("Cartoon or fantasy violence"));
    CHECK(prompt.kind == PromptKind::Intensity);
    CHECK(prompt.expects_image);
    CHECK(prompt.text.find("Cartoon or Fantasy Violence") != std::string::npos);
    CHECK(prompt.text.find("ranging from mild to intense in the screenshot image") !=
          std::string::npos);

    const PromptText gambling =
        render_intensity_prompt(*find_category_by_label("Simulated gambling"));
    CHECK(gambling.text.find("Simulated Gambling") != std::string::npos);

    const PromptText drugs =
        render_intensity_prompt(*find_category_by_label("Alcohol, tobacco, or drug use"));
    CHECK(drugs.text.find("Alcohol, Tobacco, or Drug Use") != std::string::npos);
}

TEST_CASE("intensity prompt rejects insensitive categories") {
    CHECK_THROWS_AS(render_intensity_prompt(category_by_id(0)), PromptError);
    CHECK_THROWS_AS(render_intensity_prompt(*find_category_by_label("Gambling or contests")),
                    PromptError);
}

TEST_CASE("rating prompt embeds description and screenshot references") {
    const PromptText one = render_rating_prompt("A fun puzzle game.", 1);
    CHECK(one.expects_image);
    CHECK(one.text.find("the attached screenshot image") != std::string::npos);
    CHECK(one.text.find("A fun puzzle game.") != std::string::npos);
    for (const char* label : {"4+", "9+", "12+", "17+"})
        CHECK(one.text.find(label) != std::string::npos);

    const PromptText none = render_rating_prompt("Desc only.", 0);
    CHECK_FALSE(none.expects_image);
    CHECK(none.text.find("screenshot") == std::string::npos);

    const PromptText empty = render_rating_prompt("", 2);
    CHECK(empty.expects_image);
    CHECK(empty.text.find("(no description provided)") != std::string::npos);
    CHECK(empty.text.find("2 attached screenshot images") != std::string::npos);
}

TEST_CASE("caption prompt is fixed and avoids the rating vocabulary") {
    const PromptText caption = render_caption_prompt();
    CHECK(caption.kind == PromptKind::Caption);
    CHECK(caption.expects_image);
    CHECK(caption.text == render_caption_prompt().text);

    const std::string lowered = detail::to_lower(caption.text);
    for (const char* leak : {"4+", "9+", "12+", "17+", "maturity", "rating", "policy"})
        CHECK(lowered.find(leak) == std::string::npos);
}

TEST_CASE("parse_content_response decodes ids") {
    const PolicyTable table = builtin_policy();

    const auto two_five = parse_content_response("2, 5", table);
    REQUIRE(two_five.categories.size() == 2);
    CHECK(two_five.categories[0].id == 2);
    CHECK(two_five.categories[1].id == 5);

    const auto ten = parse_content_response("The answer is 10.", table);
    REQUIRE(ten.categories.size() == 1);
    CHECK(ten.categories[0].id == 10);

    // Ids win over labels when both are present.
    const auto mixed = parse_content_response("3 (Profanity or crude humor)", table);
    REQUIRE(mixed.categories.size() == 1);
    CHECK(mixed.categories[0].id == 3);

    // Duplicates collapse.
    const auto dup = parse_content_response("5, 5, 5", table);
    CHECK(dup.categories.size() == 1);
}

TEST_CASE("parse_content_response falls back to label matching") {
    const PolicyTable table = builtin_policy();
    const auto parsed =
        parse_content_response("The image shows Cartoon or Fantasy Violence.", table);
    REQUIRE(parsed.categories.size() == 1);
    CHECK(parsed.categories[0].id == 1);

    const auto none = parse_content_response("None", table);
    REQUIRE(none.categories.size() == 1);
    CHECK(none.categories[0].id == 0);
}

TEST_CASE("parse_content_response drops None when other contents appear") {
    const PolicyTable table = builtin_policy();
    const auto parsed = parse_content_response("0, 5", table);
    REQUIRE(parsed.categories.size() == 1);
    CHECK(parsed.categories[0].id == 5);
}

TEST_CASE("parse_content_response rejects unusable text") {
    const PolicyTable table = builtin_policy();
    CHECK_THROWS_AS(parse_content_response("I cannot tell", table), UnparseableError);
    CHECK_THROWS_AS(parse_content_response("", table), UnparseableError);
    CHECK_THROWS_AS(parse_content_response("42", table), UnparseableError);  // out of range
    // "nonetheless" must not be read as the None label.
    CHECK_THROWS_AS(parse_content_response("nonetheless unclear", table), UnparseableError);
}

TEST_CASE("parse_intensity_response") {
    CHECK(parse_intensity_response("intense") == IntensityLevel::Intense);
    CHECK(parse_intensity_response("Mild.") == IntensityLevel::Mild);
    CHECK(parse_intensity_response("The content is MILD overall") == IntensityLevel::Mild);
    CHECK_THROWS_AS(parse_intensity_response("somewhere between mild and intense"),
                    UnparseableError);
    CHECK_THROWS_AS(parse_intensity_response("moderate"), UnparseableError);
}

TEST_CASE("parse_rating_response tolerant token forms") {
    CHECK(parse_rating_response("17+") == RatingLevel::SeventeenPlus);
    CHECK(parse_rating_response("Rating: 12+ because of mild violence") ==
          RatingLevel::TwelvePlus);
    CHECK(parse_rating_response("I would rate this 9.") == RatingLevel::NinePlus);
    CHECK(parse_rating_response("4") == RatingLevel::FourPlus);
    CHECK(parse_rating_response("answer: 17") == RatingLevel::SeventeenPlus);
    CHECK(parse_rating_response("\"12+\"") == RatingLevel::TwelvePlus);

    CHECK_THROWS_AS(parse_rating_response("PG-13"), UnparseableError);
    CHECK_THROWS_AS(parse_rating_response("17 years and older"), UnparseableError);
    CHECK_THROWS_AS(parse_rating_response("unsuitable"), UnparseableError);
    CHECK_THROWS_AS(parse_rating_response("45+"), UnparseableError);
}

TEST_CASE("canonical labels round-trip through the parsers") {
    const PolicyTable table = builtin_policy();
    for (RatingLevel rating : all_ratings())
        CHECK(parse_rating_response(std::string(rating_label(rating))) == rating);
    CHECK(parse_intensity_response("mild") == IntensityLevel::Mild);
    CHECK(parse_intensity_response("intense") == IntensityLevel::Intense);
    for (const auto& category : categories()) {
        const auto by_id = parse_content_response(std::to_string(category.id), table);
        REQUIRE(by_id.categories.size() == 1);
        CHECK(by_id.categories[0].id == category.id);
        const auto by_label = parse_content_response(category.label, table);
        REQUIRE(by_label.categories.size() == 1);
        CHECK(by_label.categories[0].id == category.id);
    }
}
