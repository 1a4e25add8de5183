#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "maturity/dataset.hpp"
#include "maturity/image.hpp"
#include "maturity/policy.hpp"

// Synthetic fixture dataset: placeholder screenshots plus a scripted mock
// fixture whose answers drive the pipeline to a known rating per app. Used by
// the test suites and the fixture generator tool; nothing here talks to a
// real backend.
namespace maturity::testing {

struct PlannedFinding {
    int category_id = 0;
    IntensityLevel intensity = IntensityLevel::NotApplicable;
};

struct PlannedScreenshot {
    std::string relative_path;
    std::string digest;
    std::string content_answer;               // scripted content response
    std::optional<std::string> intensity_answer;  // scripted once per screenshot
    std::vector<PlannedFinding> findings;
};

struct PlannedApp {
    App app;
    std::vector<PlannedScreenshot> screenshots;
    RatingLevel expected;  // max policy rating over all planned findings
};

struct GeneratedFixture {
    std::filesystem::path root;
    std::filesystem::path manifest_path;
    std::filesystem::path mock_fixture_path;
    std::filesystem::path images_dir;
    std::vector<PlannedApp> plan;
};

namespace detail {

inline void write_placeholder_png(const std::filesystem::path& path, uint64_t noise) {
    cv::Mat canvas(48, 64, CV_8UC3,
                   cv::Scalar(static_cast<double>(noise & 0xff),
                              static_cast<double>((noise >> 8) & 0xff),
                              static_cast<double>((noise >> 16) & 0xff)));
    const int x = static_cast<int>((noise >> 24) % 40);
    const int y = static_cast<int>((noise >> 32) % 28);
    cv::rectangle(canvas, cv::Rect(x, y, 20, 16),
                  cv::Scalar(static_cast<double>((noise >> 40) & 0xff),
                             static_cast<double>((noise >> 48) & 0xff),
                             static_cast<double>((noise >> 56) & 0xff)),
                  cv::FILLED);
    if (!cv::imwrite(path.string(), canvas))
        throw IoError("cannot write placeholder image: " + path.string());
}

inline std::string file_digest(const std::filesystem::path& path) {
    const auto bytes = maturity::detail::read_file_bytes(path);
    return maturity::detail::sha256_hex(bytes.data(), bytes.size());
}

}  // namespace detail

// Builds <root>/images/*.png, <root>/apps.json and <root>/mock.json.
// apps_per_class apps per rating level, deterministic for a given seed.
inline GeneratedFixture generate_fixture(const std::filesystem::path& root,
                                         size_t apps_per_class = 10, uint64_t seed = 7) {
    namespace fs = std::filesystem;
    GeneratedFixture fixture;
    fixture.root = root;
    fixture.images_dir = root / "images";
    fixture.manifest_path = root / "apps.json";
    fixture.mock_fixture_path = root / "mock.json";
    fs::create_directories(fixture.images_dir);

    const PolicyTable policy = builtin_policy();
    maturity::detail::SplitMix64 rng(seed);

    // (category, intensity) pairs that land exactly on each target rating.
    const std::map<RatingLevel, std::vector<PlannedFinding>> peaks = {
        {RatingLevel::NinePlus,
         {{1, IntensityLevel::Mild},
          {2, IntensityLevel::Mild},
          {3, IntensityLevel::Mild},
          {4, IntensityLevel::Mild}}},
        {RatingLevel::TwelvePlus,
         {{1, IntensityLevel::Intense},
          {2, IntensityLevel::Intense},
          {5, IntensityLevel::Mild},
          {6, IntensityLevel::Mild},
          {7, IntensityLevel::Mild},
          {9, IntensityLevel::Mild}}},
        {RatingLevel::SeventeenPlus,
         {{4, IntensityLevel::Intense},
          {5, IntensityLevel::Intense},
          {6, IntensityLevel::Intense},
          {10, IntensityLevel::NotApplicable},
          {11, IntensityLevel::NotApplicable}}},
    };
    const char* genres[] = {"Games", "Entertainment", "Social Networking", "Education",
                            "Utilities"};
    const char* blurbs[] = {
        "Build, explore and share your creations with friends around the world.",
        "Fast paced action with daily challenges and seasonal events.",
        "Chat, stream and discover trending creators in one place.",
        "Learn something new every day with bite-sized lessons.",
        "The essential toolkit for getting things done on the go.",
    };

    nlohmann::json answers = nlohmann::json::array();
    size_t app_counter = 0;

    for (RatingLevel target : all_ratings()) {
        for (size_t n = 0; n < apps_per_class; ++n) {
            PlannedApp planned;
            App& app = planned.app;
            app.id = "app" + std::to_string(100 + app_counter);
            app.name = "Fixture App " + std::to_string(app_counter);
            app.genre = genres[app_counter % 5];
            // A couple of apps per class exercise the empty-description path.
            app.description = (n % 5 == 4) ? "" : blurbs[app_counter % 5];
            app.base_dir = root;
            ++app_counter;

            const size_t shot_count = 2 + rng.below(6);  // 2..7
            const size_t peak_index = rng.below(shot_count);

            for (size_t s = 0; s < shot_count; ++s) {
                PlannedScreenshot shot;
                shot.relative_path =
                    "images/" + app.id + "_s" + std::to_string(s) + ".png";
                const fs::path image_path = root / shot.relative_path;
                detail::write_placeholder_png(image_path, rng.next());
                shot.digest = detail::file_digest(image_path);

                if (target == RatingLevel::FourPlus || s != peak_index) {
                    // Filler: None, or occasionally a mild 9+ finding on apps
                    // rated 12+ and up so rankings have real work to do.
                    const bool add_minor = target != RatingLevel::FourPlus &&
                                           rating_rank(target) >= 2 && rng.below(3) == 0;
                    if (add_minor) {
                        shot.findings = {{1 + static_cast<int>(rng.below(4)),
                                          IntensityLevel::Mild}};
                        shot.intensity_answer = "mild";
                    } else {
                        shot.findings = {{0, IntensityLevel::NotApplicable}};
                    }
                } else {
                    const auto& pool = peaks.at(target);
                    PlannedFinding peak = pool[rng.below(pool.size())];
                    shot.findings = {peak};
                    if (peak.intensity != IntensityLevel::NotApplicable)
                        shot.intensity_answer =
                            std::string(intensity_label(peak.intensity));
                    // Sometimes stack a second, milder category on the peak
                    // screenshot; it shares the screenshot's intensity answer.
                    if (peak.intensity == IntensityLevel::Mild && rng.below(4) == 0) {
                        int extra = 1 + static_cast<int>(rng.below(4));
                        if (extra != peak.category_id)
                            shot.findings.push_back({extra, IntensityLevel::Mild});
                    }
                }

                std::string content;
                for (const auto& finding : shot.findings) {
                    if (!content.empty()) content += ", ";
                    content += std::to_string(finding.category_id);
                }
                shot.content_answer = content;

                answers.push_back({{"digest", shot.digest},
                                   {"kind", "content"},
                                   {"text", shot.content_answer}});
                if (shot.intensity_answer)
                    answers.push_back({{"digest", shot.digest},
                                       {"kind", "intensity"},
                                       {"text", *shot.intensity_answer}});

                app.screenshots.push_back(shot.relative_path);
                planned.screenshots.push_back(std::move(shot));
            }

            // Expected rating: max rule over every planned finding.
            std::vector<RatingLevel> implied;
            for (const auto& shot : planned.screenshots)
                for (const auto& finding : shot.findings)
                    implied.push_back(lookup_rating(
                        policy, category_by_id(finding.category_id), finding.intensity));
            planned.expected = combine_ratings(implied);
            if (planned.expected != target)
                throw Error("fixture generator bug: app " + app.id + " expected " +
                            std::string(rating_label(target)) + " but plan implies " +
                            std::string(rating_label(planned.expected)));

            // The rating answer rides on whichever screenshot leads the final
            // request. Each screenshot answers with the rating its own
            // findings imply, so strategies that fuse the top-ranked
            // screenshot recover the app's rating while unranked choices can
            // undershoot.
            for (const auto& shot : planned.screenshots) {
                std::vector<RatingLevel> shot_implied;
                for (const auto& finding : shot.findings)
                    shot_implied.push_back(lookup_rating(
                        policy, category_by_id(finding.category_id), finding.intensity));
                answers.push_back(
                    {{"digest", shot.digest},
                     {"kind", "rating"},
                     {"text", std::string(rating_label(combine_ratings(shot_implied)))}});
            }

            app.ground_truth = planned.expected;
            fixture.plan.push_back(std::move(planned));
        }
    }

    std::vector<App> apps;
    apps.reserve(fixture.plan.size());
    for (const auto& planned : fixture.plan) apps.push_back(planned.app);
    {
        std::ofstream out(fixture.manifest_path);
        out << apps_to_manifest(apps).dump(2) << "\n";
    }
    {
        const nlohmann::json mock{
            {"defaults",
             {{"content", "0"},
              {"intensity", "mild"},
              {"rating", "4+"},
              {"caption", "A plain application screen with generic interface elements."}}},
            {"answers", answers}};
        std::ofstream out(fixture.mock_fixture_path);
        out << mock.dump(2) << "\n";
    }
    return fixture;
}

}  // namespace maturity::testing
