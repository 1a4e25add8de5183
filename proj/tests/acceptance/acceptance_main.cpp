// Acceptance suite: deterministic, property-based checks over the whole
// artifact plus an optional live smoke test. Prints one line per criterion.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "maturity/pipeline.hpp"
#include "maturity/runner.hpp"
#include "maturity/testing.hpp"

using namespace maturity;
namespace fs = std::filesystem;

namespace {

struct CriterionFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool condition, const std::string& message) {
    if (!condition) throw CriterionFailure(message);
}

// ---------------------------------------------------------------------------
// Independent oracles. Everything here is computed from literals or from the
// fixture files directly, never through the code paths under test.
// ---------------------------------------------------------------------------

// (category id, intensity) -> rating rank per the App Store policy table.
// "na" marks the intensity-insensitive rows.
struct OracleRule {
    int category;
    const char* intensity;
    int rank;
};
const OracleRule kOracleRules[] = {
    {0, "na", 0},      {1, "mild", 1},  {1, "intense", 2}, {2, "mild", 1},
    {2, "intense", 2}, {3, "mild", 1},  {3, "intense", 2}, {4, "mild", 1},
    {4, "intense", 3}, {5, "mild", 2},  {5, "intense", 3}, {6, "mild", 2},
    {6, "intense", 3}, {7, "mild", 2},  {7, "intense", 3}, {8, "mild", 2},
    {8, "intense", 3}, {9, "mild", 2},  {9, "intense", 3}, {10, "na", 3},
    {11, "na", 3},
};

int oracle_rank(int category, const std::string& intensity) {
    for (const auto& rule : kOracleRules)
        if (rule.category == category && intensity == rule.intensity) return rule.rank;
    throw CriterionFailure("oracle has no entry for category " + std::to_string(category) +
                           " intensity " + intensity);
}

bool oracle_sensitive(int category) {
    for (const auto& rule : kOracleRules)
        if (rule.category == category && std::string("mild") == rule.intensity) return true;
    return false;
}

const char* kRankLabels[] = {"4+", "9+", "12+", "17+"};

std::vector<int> split_ids(const std::string& text) {
    std::vector<int> ids;
    std::stringstream stream(text);
    std::string token;
    while (std::getline(stream, token, ',')) ids.push_back(std::stoi(token));
    return ids;
}

// Expected per-app ratings recomputed straight from the fixture files.
struct FixtureOracle {
    // app id -> expected rating label
    std::map<std::string, std::string> expected;
    // app id -> exact backend request count for selective CoT (n + c + 1)
    std::map<std::string, size_t> request_counts;
};

FixtureOracle compute_fixture_oracle(const fs::path& manifest_path,
                                     const fs::path& mock_path) {
    nlohmann::json manifest;
    std::ifstream(manifest_path) >> manifest;
    nlohmann::json mock;
    std::ifstream(mock_path) >> mock;

    std::map<std::pair<std::string, std::string>, std::string> answers;
    for (const auto& entry : mock["answers"])
        answers[{entry["kind"], entry["digest"]}] = entry["text"];
    const std::string default_content = mock["defaults"].value("content", "0");
    const std::string default_intensity = mock["defaults"].value("intensity", "mild");

    FixtureOracle oracle;
    for (const auto& record : manifest["apps"]) {
        const std::string id = record["id"];
        int max_rank = 0;
        size_t intensity_requests = 0;
        const auto screenshots = record["screenshots"].get<std::vector<std::string>>();
        for (const auto& rel : screenshots) {
            const auto bytes =
                maturity::detail::read_file_bytes(manifest_path.parent_path() / rel);
            const std::string digest =
                maturity::detail::sha256_hex(bytes.data(), bytes.size());

            auto content_it = answers.find({"content", digest});
            const std::string content =
                content_it == answers.end() ? default_content : content_it->second;
            auto intensity_it = answers.find({"intensity", digest});
            const std::string intensity =
                intensity_it == answers.end() ? default_intensity : intensity_it->second;

            for (int category : split_ids(content)) {
                const bool sensitive = oracle_sensitive(category);
                if (sensitive) ++intensity_requests;
                max_rank = std::max(
                    max_rank, oracle_rank(category, sensitive ? intensity : "na"));
            }
        }
        oracle.expected[id] = kRankLabels[max_rank];
        oracle.request_counts[id] = screenshots.size() + intensity_requests + 1;
    }
    return oracle;
}

// ---------------------------------------------------------------------------
// Shared fixture
// ---------------------------------------------------------------------------

const maturity::testing::GeneratedFixture& fixture() {
    static const auto generated = [] {
        const fs::path dir = fs::temp_directory_path() / "maturity_acceptance" / "fixture";
        fs::remove_all(dir);
        return maturity::testing::generate_fixture(dir, 10, 7);  // 40 apps
    }();
    return generated;
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

std::string criterion_policy_oracle() {
    const PolicyTable table = builtin_policy();
    require(table.rules.size() == 21, "builtin table must have 21 rules");

    size_t checked = 0;
    for (const auto& rule : kOracleRules) {
        const ContentCategory& category = category_by_id(rule.category);
        const auto intensity = intensity_from_label(rule.intensity);
        require(intensity.has_value(), "bad oracle intensity");
        const RatingLevel rating = lookup_rating(table, category, *intensity);
        require(rating_rank(rating) == rule.rank,
                "lookup mismatch for category " + category.label + "/" + rule.intensity);
        ++checked;
    }
    require(checked == 21, "expected 21 rule checks");

    size_t monotone = 0;
    for (const auto& category : categories()) {
        if (!category.intensity_sensitive) continue;
        const RatingLevel mild = lookup_rating(table, category, IntensityLevel::Mild);
        const RatingLevel intense = lookup_rating(table, category, IntensityLevel::Intense);
        require(rating_rank(mild) <= rating_rank(intense),
                "monotonicity violated for " + category.label);
        ++monotone;
    }
    require(monotone == 9, "expected 9 intensity-sensitive mature categories");
    return "21/21 rules match, monotonicity 9/9";
}

std::string criterion_combine_max() {
    maturity::detail::SplitMix64 rng(424242);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<RatingLevel> ratings;
        const size_t size = rng.below(11);  // 0..10
        for (size_t i = 0; i < size; ++i) ratings.push_back(all_ratings()[rng.below(4)]);

        int brute = 0;
        for (RatingLevel r : ratings) brute = std::max(brute, rating_rank(r));
        require(rating_rank(combine_ratings(ratings)) == brute,
                "combine_ratings deviates from brute-force max");

        std::vector<RatingLevel> shuffled = ratings;
        maturity::detail::deterministic_shuffle(shuffled, rng);
        require(combine_ratings(shuffled) == combine_ratings(ratings),
                "combine_ratings is not permutation invariant");
    }
    return "1000/1000 multisets match brute-force max";
}

std::string criterion_ranking_oracle() {
    maturity::detail::SplitMix64 rng(777);
    for (int trial = 0; trial < 500; ++trial) {
        const size_t n = 1 + rng.below(9);
        std::vector<ScreenshotAssessment> assessments;
        for (size_t i = 0; i < n; ++i) {
            ScreenshotAssessment a;
            a.screenshot_index = static_cast<int>(i);
            a.max_severity = SeverityScore{static_cast<int>(rng.below(4)),
                                           1 + static_cast<int>(rng.below(21))};
            assessments.push_back(a);
        }

        // Independent oracle: repeatedly select the best remaining by
        // explicit pairwise comparison.
        std::vector<int> expected;
        std::vector<bool> used(n, false);
        for (size_t round = 0; round < n; ++round) {
            int best = -1;
            for (size_t i = 0; i < n; ++i) {
                if (used[i]) continue;
                if (best < 0) {
                    best = static_cast<int>(i);
                    continue;
                }
                const auto& c = assessments[i].max_severity;
                const auto& l = assessments[static_cast<size_t>(best)].max_severity;
                const bool more_severe =
                    c.rating_rank > l.rating_rank ||
                    (c.rating_rank == l.rating_rank && c.row > l.row);
                if (more_severe) best = static_cast<int>(i);
            }
            used[static_cast<size_t>(best)] = true;
            expected.push_back(best);
        }
        require(rank_screenshots(assessments) == expected,
                "rank_screenshots deviates from the sort oracle");
    }
    return "500/500 assessment sets match the sort oracle";
}

std::string criterion_end_to_end_oracle() {
    const auto& fix = fixture();
    const FixtureOracle oracle =
        compute_fixture_oracle(fix.manifest_path, fix.mock_fixture_path);
    const auto apps = load_dataset(fix.manifest_path);
    require(apps.size() == 40, "fixture must have 40 apps");

    size_t matched = 0;
    for (const auto& app : apps) {
        auto backend = MockBackend::from_fixture(fix.mock_fixture_path);
        PipelineOptions options;
        options.k = 1;
        options.concurrency = 1;
        Pipeline pipeline(std::make_shared<ModelClient>(backend), builtin_policy(), options);

        const RatingDecision decision = pipeline.rate_app(app, FusionStrategy::SelectiveCoT);
        const std::string expected = oracle.expected.at(app.id);
        require(std::string(rating_label(decision.rating)) == expected,
                "app " + app.id + ": pipeline says " +
                    std::string(rating_label(decision.rating)) + ", oracle says " + expected);

        const size_t expected_calls = oracle.request_counts.at(app.id);
        require(backend->call_count() == expected_calls,
                "app " + app.id + ": request-count law violated (" +
                    std::to_string(backend->call_count()) + " calls, expected " +
                    std::to_string(expected_calls) + ")");

        // The top-ranked screenshot carries the app's maximum severity: the
        // max rule over every finding equals the top-1 screenshot's rank.
        std::vector<RatingLevel> all_findings;
        for (const auto& assessment : decision.assessments)
            for (const auto& finding : assessment.findings)
                all_findings.push_back(lookup_rating(pipeline.table(), finding.category,
                                                     finding.intensity));
        const int top1 = rank_screenshots(decision.assessments)[0];
        require(rating_rank(combine_ratings(all_findings)) ==
                    decision.assessments[static_cast<size_t>(top1)].max_severity.rating_rank,
                "app " + app.id + ": top-1 screenshot does not carry the max severity");
        ++matched;
    }
    return std::to_string(matched) + "/40 ratings match the brute-force policy oracle, "
           "request counts exact";
}

std::string criterion_strategy_equivalence() {
    const auto& fix = fixture();
    const auto apps = load_dataset(fix.manifest_path);

    size_t matched = 0;
    for (const auto& app : apps) {
        auto backend = MockBackend::from_fixture(fix.mock_fixture_path);
        PipelineOptions options;
        options.k = static_cast<int>(app.screenshots.size());  // k = n
        Pipeline pipeline(std::make_shared<ModelClient>(backend), builtin_policy(), options);

        const RatingDecision selective = pipeline.rate_app(app, FusionStrategy::SelectiveCoT);
        const RatingDecision global = pipeline.rate_app(app, FusionStrategy::GlobalCoT);

        const TraceEntry& selective_rating = selective.trace.back();
        const TraceEntry& global_rating = global.trace.back();
        require(selective_rating.kind == PromptKind::Rating &&
                    global_rating.kind == PromptKind::Rating,
                "final trace entries must be rating requests");

        const std::set<std::string> selective_images(selective_rating.image_digests.begin(),
                                                     selective_rating.image_digests.end());
        const std::set<std::string> global_images(global_rating.image_digests.begin(),
                                                  global_rating.image_digests.end());
        require(selective_images == global_images,
                "app " + app.id + ": image sets differ between selective k=n and global");
        require(selective_rating.prompt_text == global_rating.prompt_text,
                "app " + app.id + ": rating prompts differ (description payload)");
        ++matched;
    }
    return std::to_string(matched) + "/40 apps: selective k=n equals global CoT";
}

std::string criterion_metrics_handcheck() {
    using Pair = std::pair<RatingLevel, RatingLevel>;

    // Fixed 8-sample example.
    std::vector<Pair> pairs = {
        {RatingLevel::FourPlus, RatingLevel::FourPlus},
        {RatingLevel::FourPlus, RatingLevel::FourPlus},
        {RatingLevel::FourPlus, RatingLevel::FourPlus},
        {RatingLevel::FourPlus, RatingLevel::NinePlus},
        {RatingLevel::NinePlus, RatingLevel::NinePlus},
        {RatingLevel::NinePlus, RatingLevel::NinePlus},
        {RatingLevel::NinePlus, RatingLevel::FourPlus},
        {RatingLevel::NinePlus, RatingLevel::FourPlus},
    };
    const MetricsReport eight = metrics(confusion_matrix(pairs));
    require(std::abs(eight.accuracy - 5.0 / 8.0) < 1e-9, "accuracy != 5/8");
    const ClassMetrics& four = eight.per_class.at(RatingLevel::FourPlus);
    require(std::abs(four.precision - 0.6) < 1e-9, "class-4+ precision != 3/5");
    require(std::abs(four.recall - 0.75) < 1e-9, "class-4+ recall != 3/4");
    require(std::abs(four.f1 - 2.0 / 3.0) < 1e-9, "class-4+ F1 != 0.6667");

    // Independent brute-force recomputation.
    for (RatingLevel rating : all_ratings()) {
        size_t tp = 0, fp = 0, fn = 0;
        for (const auto& [actual, predicted] : pairs) {
            if (actual == rating && predicted == rating) ++tp;
            if (actual != rating && predicted == rating) ++fp;
            if (actual == rating && predicted != rating) ++fn;
        }
        const double precision = (tp + fp) == 0 ? 0.0 : double(tp) / double(tp + fp);
        const double recall = (tp + fn) == 0 ? 0.0 : double(tp) / double(tp + fn);
        const double f1 = (precision + recall) == 0.0
                              ? 0.0
                              : 2.0 * precision * recall / (precision + recall);
        const ClassMetrics& cm = eight.per_class.at(rating);
        require(std::abs(cm.precision - precision) < 1e-9, "precision deviates from oracle");
        require(std::abs(cm.recall - recall) < 1e-9, "recall deviates from oracle");
        require(std::abs(cm.f1 - f1) < 1e-9, "f1 deviates from oracle");
    }

    // Diagonal-only matrix scores 1.0 everywhere.
    std::vector<Pair> diagonal;
    for (RatingLevel rating : all_ratings())
        for (int i = 0; i < 3; ++i) diagonal.push_back({rating, rating});
    const MetricsReport perfect = metrics(confusion_matrix(diagonal));
    require(perfect.accuracy == 1.0 && perfect.macro.f1 == 1.0,
            "diagonal matrix must score 1.0");

    // Synthetic run reproducing the 52-of-229 worked relation.
    std::vector<Pair> seventeen;
    for (int i = 0; i < 52; ++i)
        seventeen.push_back({RatingLevel::SeventeenPlus, RatingLevel::TwelvePlus});
    for (int i = 0; i < 177; ++i)
        seventeen.push_back({RatingLevel::SeventeenPlus, RatingLevel::SeventeenPlus});
    const ConfusionMatrix cm = confusion_matrix(seventeen);
    require(cm.at(RatingLevel::SeventeenPlus, RatingLevel::TwelvePlus) == 52,
            "counts[17+][12+] != 52");
    require(cm.total == 229, "total != 229");

    return "8-sample, diagonal and 52/229 checks all within 1e-9";
}

std::string criterion_replay_determinism() {
    const auto& fix = fixture();
    const fs::path work = fs::temp_directory_path() / "maturity_acceptance" / "replay";
    fs::remove_all(work);

    RunConfig config;
    config.manifest = fix.manifest_path.string();
    config.strategies = {"selective-cot", "basic-fusion"};
    config.backend = "mock";
    config.fixture = fix.mock_fixture_path.string();
    config.cache_dir = (work / "cache").string();
    config.out_dir = (work / "out").string();
    config.concurrency = 4;

    auto read_file = [](const fs::path& path) {
        std::ifstream in(path, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };

    auto first_client = make_client(config);
    run_and_write_experiment(config, first_client);
    require(first_client->stats().backend_calls > 0, "first run must hit the backend");
    const std::string report_first = read_file(fs::path(config.out_dir) / "report.json");
    const std::string decisions_first = read_file(fs::path(config.out_dir) / "decisions.json");

    auto second_client = make_client(config);
    run_and_write_experiment(config, second_client);
    require(second_client->stats().backend_calls == 0,
            "second run issued " + std::to_string(second_client->stats().backend_calls) +
                " backend calls, expected 0");
    const std::string report_second = read_file(fs::path(config.out_dir) / "report.json");
    const std::string decisions_second =
        read_file(fs::path(config.out_dir) / "decisions.json");

    require(!report_first.empty(), "report.json missing");
    require(report_first == report_second, "report.json differs between runs");
    require(decisions_first == decisions_second, "decisions.json differs between runs");
    return "byte-identical reports, zero backend calls on replay";
}

std::string criterion_ablation_determinism() {
    const auto& fix = fixture();
    const auto apps = load_dataset(fix.manifest_path);

    // An app whose top-k set cannot cover everything: any app with >= 3
    // screenshots with k = 1.
    const App* subject = nullptr;
    for (const auto& app : apps)
        if (app.screenshots.size() >= 3) subject = &app;
    require(subject != nullptr, "fixture lacks an app with 3+ screenshots");

    auto run_once = [&](uint64_t seed) {
        auto backend = MockBackend::from_fixture(fix.mock_fixture_path);
        PipelineOptions options;
        options.k = 1;
        options.seed = seed;
        Pipeline pipeline(std::make_shared<ModelClient>(backend), builtin_policy(), options);
        return pipeline.rate_app(*subject, FusionStrategy::RandomSelectAblation);
    };

    // Fixed seed: identical selections across runs.
    const RatingDecision a = run_once(2024);
    const RatingDecision b = run_once(2024);
    require(a.selected_screenshots == b.selected_screenshots,
            "same seed selected different screenshots");

    // 100 seeds: the pick always stays outside the top-k set.
    auto reference_backend = MockBackend::from_fixture(fix.mock_fixture_path);
    PipelineOptions reference_options;
    reference_options.k = 1;
    Pipeline reference(std::make_shared<ModelClient>(reference_backend), builtin_policy(),
                       reference_options);
    std::vector<TraceEntry> trace;
    const auto assessments = reference.extract_findings(*subject, &trace);
    const int top1 = rank_screenshots(assessments)[0];

    std::set<int> picks;
    for (uint64_t seed = 0; seed < 100; ++seed) {
        const RatingDecision decision = run_once(seed);
        require(decision.selected_screenshots.size() == 1, "expected a single selection");
        require(decision.selected_screenshots[0] != top1,
                "seed " + std::to_string(seed) + " picked the top-1 screenshot");
        picks.insert(decision.selected_screenshots[0]);
    }
    require(picks.size() > 1, "ablation never varied across 100 seeds");
    return "fixed seed stable, 100/100 seeds picked outside top-k";
}

std::string criterion_live_smoke() {
    const char* key = std::getenv(kApiKeyEnvVar);
    if (key == nullptr || std::string(key).empty())
        throw CriterionFailure("__SKIP__ MATURITY_RATER_API_KEY not set");

    const char* base_env = std::getenv("MATURITY_RATER_BASE_URL");
    const char* model_env = std::getenv("MATURITY_RATER_MODEL");

    RunConfig config;
    config.backend = "http";
    config.base_url = base_env != nullptr ? base_env : "https://api.openai.com";
    config.model_id = model_env != nullptr ? model_env : "gpt-4o-mini";
    config.cache_enabled = false;
    config.k = 1;

    const auto& fix = fixture();
    const auto apps = load_dataset(fix.manifest_path);

    const auto started = std::chrono::steady_clock::now();
    auto client = make_client(config);
    Pipeline pipeline(client, builtin_policy(), pipeline_options_from(config));
    const RatingDecision decision = pipeline.rate_app(apps.front(), FusionStrategy::SelectiveCoT);
    const auto elapsed = std::chrono::duration_cast<std::chrono::seconds>(
        std::chrono::steady_clock::now() - started);

    require(elapsed.count() < 120, "live rating exceeded 2 minutes");
    const std::string label(rating_label(decision.rating));
    require(label == "4+" || label == "9+" || label == "12+" || label == "17+",
            "invalid rating label");
    require(!decision.trace.empty(), "live decision carries no trace");
    for (const auto& entry : decision.trace)
        require(!entry.response_text.empty(), "trace entry with empty response");
    return "live rating " + label + " with a complete trace in " +
           std::to_string(elapsed.count()) + "s";
}

struct Criterion {
    std::string name;
    double budget_seconds;
    std::function<std::string()> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {"1. policy oracle", 1.0, criterion_policy_oracle},
        {"2. combine-max equivalence", 1.0, criterion_combine_max},
        {"3. ranking oracle", 1.0, criterion_ranking_oracle},
        {"4. end-to-end oracle equivalence", 5.0, criterion_end_to_end_oracle},
        {"5. strategy equivalence (k=n)", 30.0, criterion_strategy_equivalence},
        {"6. metrics hand-check", 1.0, criterion_metrics_handcheck},
        {"7. replay determinism", 10.0, criterion_replay_determinism},
        {"8. ablation determinism", 30.0, criterion_ablation_determinism},
        {"9. live smoke (http backend)", 150.0, criterion_live_smoke},
    };

    bool any_failed = false;
    for (const auto& criterion : criteria) {
        const auto started = std::chrono::steady_clock::now();
        try {
            const std::string detail = criterion.run();
            const std::chrono::duration<double> elapsed =
                std::chrono::steady_clock::now() - started;
            if (elapsed.count() > criterion.budget_seconds) {
                std::cout << "[FAIL] " << criterion.name << ": exceeded budget ("
                          << elapsed.count() << "s > " << criterion.budget_seconds << "s)\n";
                any_failed = true;
            } else {
                std::ostringstream time_note;
                time_note << std::fixed << std::setprecision(2) << elapsed.count() << "s";
                std::cout << "[PASS] " << criterion.name << ": " << detail << " ("
                          << time_note.str() << ")\n";
            }
        } catch (const std::exception& e) {
            const std::string message = e.what();
            if (message.rfind("__SKIP__", 0) == 0) {
                std::cout << "[SKIP] " << criterion.name << ": " << message.substr(9) << "\n";
            } else {
                std::cout << "[FAIL] " << criterion.name << ": " << message << "\n";
                any_failed = true;
            }
        }
    }
    return any_failed ? 1 : 0;
}
