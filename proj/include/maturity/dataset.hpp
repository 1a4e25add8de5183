#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "maturity/errors.hpp"
#include "maturity/policy.hpp"

namespace maturity {

// One app bundle: description plus ordered screenshots, with optional ground
// truth for evaluation. Screenshot paths are kept as written in the manifest
// and resolved against the manifest's directory on use.
struct App {
    std::string id;
    std::string name;
    std::string genre;
    std::string description;
    std::vector<std::string> screenshots;
    std::optional<RatingLevel> ground_truth;
    std::filesystem::path base_dir;

    std::vector<std::filesystem::path> resolved_screenshots() const {
        std::vector<std::filesystem::path> resolved;
        resolved.reserve(screenshots.size());
        for (const auto& s : screenshots) {
            std::filesystem::path p(s);
            resolved.push_back(p.is_absolute() ? p : base_dir / p);
        }
        return resolved;
    }
};

struct DatasetStats {
    size_t total = 0;
    std::map<RatingLevel, size_t> per_rating;
    size_t unlabeled = 0;
    size_t screenshots_min = 0;
    size_t screenshots_max = 0;
    double screenshots_mean = 0.0;
};

inline nlohmann::json app_to_manifest_record(const App& app) {
    nlohmann::json record{{"id", app.id},
                          {"name", app.name},
                          {"genre", app.genre},
                          {"description", app.description},
                          {"screenshots", app.screenshots}};
    if (app.ground_truth)
        record["ground_truth_rating"] = std::string(rating_label(*app.ground_truth));
    return record;
}

inline nlohmann::json apps_to_manifest(const std::vector<App>& apps) {
    nlohmann::json manifest{{"apps", nlohmann::json::array()}};
    for (const auto& app : apps) manifest["apps"].push_back(app_to_manifest_record(app));
    return manifest;
}

// Manifest schema:
//   {"apps": [{"id", "name", "genre", "description",
//              "screenshots": ["relative/path.png", ...],
//              "ground_truth_rating": "4+|9+|12+|17+"  (optional)}]}
inline std::vector<App> load_dataset_json(const nlohmann::json& manifest,
                                          const std::filesystem::path& base_dir) {
    if (!manifest.is_object() || !manifest.contains("apps") || !manifest["apps"].is_array())
        throw ManifestParseError("manifest must be an object with an \"apps\" array");

    std::vector<App> apps;
    std::set<std::string> seen_ids;
    size_t index = 0;
    for (const auto& record : manifest["apps"]) {
        const std::string where = "apps[" + std::to_string(index) + "]";
        ++index;
        if (!record.is_object())
            throw ManifestParseError(where + ": expected an object");

        App app;
        app.base_dir = base_dir;
        try {
            app.id = record.at("id").get<std::string>();
            app.name = record.value("name", std::string{});
            app.genre = record.value("genre", std::string{});
            app.description = record.value("description", std::string{});
            if (record.contains("screenshots"))
                app.screenshots = record["screenshots"].get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception& e) {
            throw ManifestParseError(where + ": " + e.what());
        }
        if (app.id.empty()) throw ManifestParseError(where + ": empty app id");

        if (record.contains("ground_truth_rating")) {
            if (!record["ground_truth_rating"].is_string())
                throw ManifestParseError(where + ": ground_truth_rating must be a string");
            const auto label = record["ground_truth_rating"].get<std::string>();
            const auto rating = rating_from_label(label);
            if (!rating) throw UnknownRatingError(label);
            app.ground_truth = rating;
        }

        if (!seen_ids.insert(app.id).second) throw DuplicateIdError(app.id);
        apps.push_back(std::move(app));
    }
    return apps;
}

inline std::vector<App> load_dataset(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw FileNotFoundError("manifest not found: " + manifest_path.string());
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw ManifestParseError(manifest_path.string() + ": malformed JSON: " + e.what());
    }
    return load_dataset_json(manifest, manifest_path.parent_path());
}

inline DatasetStats dataset_stats(const std::vector<App>& apps) {
    DatasetStats stats;
    stats.total = apps.size();
    size_t shot_sum = 0;
    bool first = true;
    for (const auto& app : apps) {
        if (app.ground_truth)
            ++stats.per_rating[*app.ground_truth];
        else
            ++stats.unlabeled;
        const size_t shots = app.screenshots.size();
        shot_sum += shots;
        if (first) {
            stats.screenshots_min = shots;
            stats.screenshots_max = shots;
            first = false;
        } else {
            stats.screenshots_min = std::min(stats.screenshots_min, shots);
            stats.screenshots_max = std::max(stats.screenshots_max, shots);
        }
    }
    stats.screenshots_mean =
        apps.empty() ? 0.0 : static_cast<double>(shot_sum) / static_cast<double>(apps.size());
    return stats;
}

// Lenient validation pass: collects every violation instead of throwing on
// the first. Screenshot counts outside the 2-7 band and missing image files
// are warnings, not violations.
struct ManifestValidation {
    std::vector<App> apps;  // records that individually parsed
    std::vector<std::string> errors;
    std::vector<std::string> warnings;

    bool ok() const { return errors.empty(); }
};

inline ManifestValidation validate_manifest(const nlohmann::json& manifest,
                                            const std::filesystem::path& base_dir) {
    ManifestValidation validation;
    if (!manifest.is_object() || !manifest.contains("apps") || !manifest["apps"].is_array()) {
        validation.errors.push_back("manifest must be an object with an \"apps\" array");
        return validation;
    }

    std::set<std::string> seen_ids;
    size_t index = 0;
    for (const auto& record : manifest["apps"]) {
        const std::string where = "apps[" + std::to_string(index) + "]";
        ++index;

        if (!record.is_object()) {
            validation.errors.push_back(where + ": expected an object");
            continue;
        }
        App app;
        app.base_dir = base_dir;
        try {
            app.id = record.at("id").get<std::string>();
            app.name = record.value("name", std::string{});
            app.genre = record.value("genre", std::string{});
            app.description = record.value("description", std::string{});
            if (record.contains("screenshots"))
                app.screenshots = record["screenshots"].get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception& e) {
            validation.errors.push_back(where + ": " + e.what());
            continue;
        }
        if (app.id.empty()) {
            validation.errors.push_back(where + ": empty app id");
            continue;
        }
        if (record.contains("ground_truth_rating")) {
            const auto& raw = record["ground_truth_rating"];
            const auto rating =
                raw.is_string() ? rating_from_label(raw.get<std::string>()) : std::nullopt;
            if (!rating) {
                validation.errors.push_back(where + " (" + app.id +
                                            "): unknown rating label: " + raw.dump());
                continue;
            }
            app.ground_truth = rating;
        }
        if (!seen_ids.insert(app.id).second) {
            validation.errors.push_back(where + ": duplicate app id: " + app.id);
            continue;
        }

        const size_t shots = app.screenshots.size();
        if (shots < 2 || shots > 7)
            validation.warnings.push_back("app " + app.id + ": " + std::to_string(shots) +
                                          " screenshots (expected 2-7)");
        for (const auto& path : app.resolved_screenshots())
            if (!std::filesystem::exists(path))
                validation.warnings.push_back("app " + app.id +
                                              ": missing screenshot file " + path.string());
        validation.apps.push_back(std::move(app));
    }
    return validation;
}

inline ManifestValidation validate_manifest_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        ManifestValidation validation;
        validation.errors.push_back("manifest not found: " + path.string());
        return validation;
    }
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        ManifestValidation validation;
        validation.errors.push_back(path.string() + ": malformed JSON: " + e.what());
        return validation;
    }
    return validate_manifest(manifest, path.parent_path());
}

struct StratifiedSample {
    std::vector<App> apps;
    std::vector<std::string> warnings;
};

namespace detail {

// Deterministic across platforms (std::shuffle is not pinned by the standard).
class SplitMix64 {
public:
    explicit SplitMix64(uint64_t seed) : state_(seed) {}

    uint64_t next() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Unbiased enough for sampling fixtures; upper bound exclusive.
    size_t below(size_t bound) { return bound == 0 ? 0 : next() % bound; }

private:
    uint64_t state_;
};

inline uint64_t fnv1a_hash(std::string_view text) {
    uint64_t hash = 0xcbf29ce484222325ull;
    for (char c : text) {
        hash ^= static_cast<unsigned char>(c);
        hash *= 0x100000001b3ull;
    }
    return hash;
}

template <typename T>
inline void deterministic_shuffle(std::vector<T>& items, SplitMix64& rng) {
    for (size_t i = items.size(); i > 1; --i)
        std::swap(items[i - 1], items[rng.below(i)]);
}

}  // namespace detail

// Per-class sample of labeled apps, deterministic for a given seed. Classes
// smaller than per_class are taken whole with a warning.
inline StratifiedSample sample_stratified(const std::vector<App>& apps, size_t per_class,
                                          uint64_t seed) {
    StratifiedSample sample;
    detail::SplitMix64 rng(seed);
    for (RatingLevel rating : all_ratings()) {
        std::vector<App> bucket;
        for (const auto& app : apps)
            if (app.ground_truth && *app.ground_truth == rating) bucket.push_back(app);
        detail::deterministic_shuffle(bucket, rng);
        if (bucket.size() < per_class) {
            sample.warnings.push_back("class " + std::string(rating_label(rating)) +
                                      " has only " + std::to_string(bucket.size()) +
                                      " labeled apps (requested " +
                                      std::to_string(per_class) + "); taking all");
        } else {
            bucket.resize(per_class);
        }
        std::move(bucket.begin(), bucket.end(), std::back_inserter(sample.apps));
    }
    return sample;
}

}  // namespace maturity
