#pragma once

#include <algorithm>
#include <atomic>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "maturity/dataset.hpp"
#include "maturity/errors.hpp"
#include "maturity/image.hpp"
#include "maturity/model.hpp"
#include "maturity/policy.hpp"
#include "maturity/prompts.hpp"

namespace maturity {

// ---------------------------------------------------------------------------
// Step-1 results
// ---------------------------------------------------------------------------

// One detected content in one screenshot, graded and scored.
struct ContentFinding {
    int screenshot_index = 0;
    ContentCategory category;
    IntensityLevel intensity = IntensityLevel::NotApplicable;
    SeverityScore severity;
    std::string raw_content_response;
    std::optional<std::string> raw_intensity_response;
};

struct ScreenshotAssessment {
    int screenshot_index = 0;
    std::vector<ContentFinding> findings;  // >= 1; [None] when nothing detected
    SeverityScore max_severity;
};

// ---------------------------------------------------------------------------
// Strategies
// ---------------------------------------------------------------------------

enum class FusionStrategy {
    DescriptionOnly,
    ScreenshotOnly,
    BasicFusion,
    ImageCaptionFusion,
    GlobalCoT,
    SelectiveCoT,
    RandomSelectAblation,
};

inline std::string_view strategy_cli_name(FusionStrategy s) {
    switch (s) {
        case FusionStrategy::DescriptionOnly: return "description-only";
        case FusionStrategy::ScreenshotOnly: return "screenshot-only";
        case FusionStrategy::BasicFusion: return "basic-fusion";
        case FusionStrategy::ImageCaptionFusion: return "image-caption-fusion";
        case FusionStrategy::GlobalCoT: return "global-cot";
        case FusionStrategy::SelectiveCoT: return "selective-cot";
        case FusionStrategy::RandomSelectAblation: return "random-ablation";
    }
    throw Error("invalid FusionStrategy");
}

inline std::string_view strategy_display_name(FusionStrategy s) {
    switch (s) {
        case FusionStrategy::DescriptionOnly: return "Description-only";
        case FusionStrategy::ScreenshotOnly: return "Screenshot-only";
        case FusionStrategy::BasicFusion: return "Basic Fusion";
        case FusionStrategy::ImageCaptionFusion: return "Image-Caption Fusion";
        case FusionStrategy::GlobalCoT: return "Global CoT Fusion";
        case FusionStrategy::SelectiveCoT: return "Selective CoT Fusion";
        case FusionStrategy::RandomSelectAblation: return "Random Selection (w/o CoT image)";
    }
    throw Error("invalid FusionStrategy");
}

// Modality column as reported in comparison tables.
inline std::string_view strategy_modality(FusionStrategy s) {
    switch (s) {
        case FusionStrategy::DescriptionOnly: return "Description-only";
        case FusionStrategy::ScreenshotOnly: return "Screenshot-only";
        default: return "Screenshot+Description";
    }
}

inline std::optional<FusionStrategy> strategy_from_cli_name(std::string_view name) {
    static const std::pair<std::string_view, FusionStrategy> names[] = {
        {"description-only", FusionStrategy::DescriptionOnly},
        {"screenshot-only", FusionStrategy::ScreenshotOnly},
        {"basic-fusion", FusionStrategy::BasicFusion},
        {"image-caption-fusion", FusionStrategy::ImageCaptionFusion},
        {"global-cot", FusionStrategy::GlobalCoT},
        {"selective-cot", FusionStrategy::SelectiveCoT},
        {"random-ablation", FusionStrategy::RandomSelectAblation},
    };
    for (const auto& [label, strategy] : names)
        if (label == name) return strategy;
    return std::nullopt;
}

inline std::vector<FusionStrategy> all_strategies() {
    return {FusionStrategy::DescriptionOnly,   FusionStrategy::ScreenshotOnly,
            FusionStrategy::BasicFusion,       FusionStrategy::ImageCaptionFusion,
            FusionStrategy::GlobalCoT,         FusionStrategy::SelectiveCoT,
            FusionStrategy::RandomSelectAblation};
}

// ---------------------------------------------------------------------------
// Decisions
// ---------------------------------------------------------------------------

struct TraceEntry {
    PromptKind kind = PromptKind::Content;
    std::string summary;
    std::string prompt_text;
    std::vector<std::string> image_digests;
    std::string response_text;
};

struct RatingDecision {
    std::string app_id;
    FusionStrategy strategy = FusionStrategy::SelectiveCoT;
    RatingLevel rating = RatingLevel::FourPlus;
    std::vector<int> selected_screenshots;  // S*
    std::vector<ScreenshotAssessment> assessments;
    std::vector<TraceEntry> trace;
    std::vector<std::string> warnings;
    int k = 1;
};

// Unrecoverable decode failure on the final rating answer; carries the trace
// accumulated so far.
class RatingUndeterminedError : public Error {
public:
    RatingUndeterminedError(std::string message, std::vector<TraceEntry> trace_so_far)
        : Error(std::move(message)), trace(std::move(trace_so_far)) {}

    std::vector<TraceEntry> trace;
};

// Sort screenshots most-severe first; policy row already breaks rating ties,
// equal scores fall back to screenshot order.
inline std::vector<int> rank_screenshots(const std::vector<ScreenshotAssessment>& assessments) {
    if (assessments.empty()) throw Error("rank_screenshots: no assessments");
    std::vector<int> order(assessments.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const auto& sa = assessments[static_cast<size_t>(a)];
        const auto& sb = assessments[static_cast<size_t>(b)];
        if (sa.max_severity != sb.max_severity) return sa.max_severity > sb.max_severity;
        return sa.screenshot_index < sb.screenshot_index;
    });
    std::vector<int> indices;
    indices.reserve(order.size());
    for (int pos : order)
        indices.push_back(assessments[static_cast<size_t>(pos)].screenshot_index);
    return indices;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

struct PipelineOptions {
    std::string model_id = "gpt-4-vision-preview";
    double temperature = 0.0;
    int max_tokens = 256;
    int max_image_side = kDefaultMaxImageSide;
    int k = 1;                  // "top screenshot(s)" count for SelectiveCoT
    uint64_t seed = 0;          // drives the random-selection ablation
    int parse_retries = 1;      // extra model calls after an unparseable answer
    bool refusal_to_none = true;
    bool append_findings_to_rating_prompt = false;
    int concurrency = 4;        // parallel apps in run_experiment
};

struct ExperimentFailure {
    std::string app_id;
    FusionStrategy strategy;
    std::string message;
};

struct ExperimentResult {
    std::vector<RatingDecision> decisions;
    std::vector<ExperimentFailure> failures;
};

class Pipeline {
public:
    Pipeline(std::shared_ptr<ModelClient> client, PolicyTable table,
             PipelineOptions options = {})
        : client_(std::move(client)), table_(std::move(table)), options_(options) {
        if (!client_) throw Error("pipeline requires a model client");
        if (options_.k < 1) throw Error("k must be >= 1");
    }

    const PolicyTable& table() const { return table_; }
    const PipelineOptions& options() const { return options_; }

    // Step 1: per screenshot, one content request, then one intensity request
    // per detected intensity-sensitive category. Refusals and undecodable
    // answers degrade instead of failing the app: screenshots degrade to a
    // None finding, a lost intensity grade degrades to Mild (the content
    // detection stands; Mild is the policy floor for the category).
    std::vector<ScreenshotAssessment> extract_findings(
        const App& app, std::vector<TraceEntry>* trace = nullptr,
        std::vector<std::string>* warnings = nullptr) {
        const auto paths = app.resolved_screenshots();
        if (paths.empty())
            throw MissingModalityError("missing modality: app " + app.id + " has no screenshots");

        std::vector<ScreenshotAssessment> assessments;
        assessments.reserve(paths.size());
        for (size_t i = 0; i < paths.size(); ++i)
            assessments.push_back(
                assess_screenshot(app, static_cast<int>(i), paths[i], trace, warnings));
        return assessments;
    }

    RatingDecision rate_app(const App& app, FusionStrategy strategy) {
        RatingDecision decision;
        decision.app_id = app.id;
        decision.strategy = strategy;
        decision.k = options_.k;

        const auto paths = app.resolved_screenshots();
        const bool needs_screenshots = strategy != FusionStrategy::DescriptionOnly;
        if (needs_screenshots && paths.empty())
            throw MissingModalityError("missing modality: strategy " +
                                       std::string(strategy_cli_name(strategy)) +
                                       " requires screenshots and app " + app.id +
                                       " has none");

        switch (strategy) {
            case FusionStrategy::DescriptionOnly: {
                decision.rating = request_rating(app.description, {}, decision);
                break;
            }
            case FusionStrategy::ScreenshotOnly: {
                decision.selected_screenshots.resize(paths.size());
                std::iota(decision.selected_screenshots.begin(),
                          decision.selected_screenshots.end(), 0);
                decision.rating = request_rating("", encode_all(paths), decision);
                break;
            }
            case FusionStrategy::BasicFusion: {
                decision.rating =
                    request_rating(app.description, {encode_one(paths[0])}, decision);
                decision.selected_screenshots = {0};
                break;
            }
            case FusionStrategy::ImageCaptionFusion: {
                run_step1(app, decision);
                const int top = rank_screenshots(decision.assessments)[0];
                decision.selected_screenshots = {top};
                const std::string caption =
                    request_caption(encode_one(paths[static_cast<size_t>(top)]), decision);
                const std::string fused_text =
                    app.description.empty()
                        ? "Screenshot caption:\n" + caption
                        : app.description + "\n\nScreenshot caption:\n" + caption;
                decision.rating = request_rating(fused_text, {}, decision);
                break;
            }
            case FusionStrategy::GlobalCoT: {
                run_step1(app, decision);
                decision.selected_screenshots.resize(paths.size());
                std::iota(decision.selected_screenshots.begin(),
                          decision.selected_screenshots.end(), 0);
                decision.rating =
                    request_rating(rating_text(app, decision), encode_all(paths), decision);
                break;
            }
            case FusionStrategy::SelectiveCoT: {
                run_step1(app, decision);
                const auto ranked = rank_screenshots(decision.assessments);
                const size_t take = std::min(static_cast<size_t>(options_.k), ranked.size());
                decision.selected_screenshots.assign(ranked.begin(),
                                                     ranked.begin() +
                                                         static_cast<long>(take));
                decision.rating = request_rating(
                    rating_text(app, decision),
                    encode_selected(paths, decision.selected_screenshots), decision);
                break;
            }
            case FusionStrategy::RandomSelectAblation: {
                run_step1(app, decision);
                const auto ranked = rank_screenshots(decision.assessments);
                const size_t take = std::min(static_cast<size_t>(options_.k), ranked.size());
                std::vector<int> outside(ranked.begin() + static_cast<long>(take),
                                         ranked.end());
                int pick;
                if (outside.empty()) {
                    pick = ranked.back();
                    decision.warnings.push_back(
                        "all screenshots fall inside the top-k set; falling back to the "
                        "lowest-ranked screenshot " +
                        std::to_string(pick));
                } else {
                    detail::SplitMix64 rng(options_.seed ^ detail::fnv1a_hash(app.id));
                    pick = outside[rng.below(outside.size())];
                }
                decision.selected_screenshots = {pick};
                decision.rating = request_rating(
                    rating_text(app, decision),
                    {encode_one(paths[static_cast<size_t>(pick)])}, decision);
                break;
            }
        }
        return decision;
    }

    // One decision per (app, strategy). Apps run concurrently up to the
    // configured limit; failures are collected, not fatal.
    ExperimentResult run_experiment(const std::vector<App>& apps,
                                    const std::vector<FusionStrategy>& strategies) {
        struct Task {
            const App* app;
            FusionStrategy strategy;
        };
        std::vector<Task> tasks;
        tasks.reserve(apps.size() * strategies.size());
        for (const auto& app : apps)
            for (FusionStrategy strategy : strategies) tasks.push_back({&app, strategy});

        std::vector<std::optional<RatingDecision>> decisions(tasks.size());
        std::vector<std::optional<ExperimentFailure>> failures(tasks.size());

        std::atomic<size_t> next{0};
        auto worker = [&] {
            while (true) {
                const size_t index = next.fetch_add(1);
                if (index >= tasks.size()) return;
                const Task& task = tasks[index];
                try {
                    decisions[index] = rate_app(*task.app, task.strategy);
                } catch (const std::exception& e) {
                    failures[index] =
                        ExperimentFailure{task.app->id, task.strategy, e.what()};
                }
            }
        };

        const size_t worker_count = std::min(
            tasks.size(), static_cast<size_t>(std::max(1, options_.concurrency)));
        std::vector<std::thread> pool;
        pool.reserve(worker_count);
        for (size_t i = 0; i < worker_count; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();

        ExperimentResult result;
        for (size_t i = 0; i < tasks.size(); ++i) {
            if (decisions[i]) result.decisions.push_back(std::move(*decisions[i]));
            if (failures[i]) result.failures.push_back(std::move(*failures[i]));
        }
        return result;
    }

private:
    void run_step1(const App& app, RatingDecision& decision) {
        decision.assessments =
            extract_findings(app, &decision.trace, &decision.warnings);
    }

    EncodedImage encode_one(const std::filesystem::path& path) const {
        return encode_image(path, options_.max_image_side);
    }

    std::vector<EncodedImage> encode_all(
        const std::vector<std::filesystem::path>& paths) const {
        std::vector<EncodedImage> images;
        images.reserve(paths.size());
        for (const auto& path : paths) images.push_back(encode_one(path));
        return images;
    }

    std::vector<EncodedImage> encode_selected(
        const std::vector<std::filesystem::path>& paths,
        const std::vector<int>& indices) const {
        std::vector<EncodedImage> images;
        images.reserve(indices.size());
        for (int index : indices)
            images.push_back(encode_one(paths[static_cast<size_t>(index)]));
        return images;
    }

    // Optional fusion of Step-1 findings into the rating prompt text.
    std::string rating_text(const App& app, const RatingDecision& decision) const {
        if (!options_.append_findings_to_rating_prompt || decision.assessments.empty())
            return app.description;
        std::string text = app.description;
        text += "\n\nDetected maturity contents:";
        bool any = false;
        for (const auto& assessment : decision.assessments) {
            for (const auto& finding : assessment.findings) {
                if (finding.category.id == 0) continue;
                text += "\n- " + finding.category.label;
                if (finding.intensity != IntensityLevel::NotApplicable)
                    text += " (" + std::string(intensity_label(finding.intensity)) + ")";
                any = true;
            }
        }
        if (!any) text += "\n- none detected";
        return text;
    }

    ModelRequest make_request(PromptText prompt, std::vector<EncodedImage> images) const {
        ModelRequest request;
        request.model_id = options_.model_id;
        request.temperature = options_.temperature;
        request.max_tokens = options_.max_tokens;
        request.prompt = std::move(prompt);
        request.images = std::move(images);
        return request;
    }

    ModelResponse complete_traced(const ModelRequest& request, const std::string& summary,
                                  std::vector<TraceEntry>* trace) {
        ModelResponse response = client_->complete(request);
        if (trace != nullptr) {
            TraceEntry entry;
            entry.kind = request.prompt.kind;
            entry.summary = summary;
            entry.prompt_text = request.prompt.text;
            for (const auto& image : request.images)
                entry.image_digests.push_back(image.bytes_digest);
            entry.response_text = response.text;
            trace->push_back(std::move(entry));
        }
        return response;
    }

    // Issues a request and reparses, re-asking the backend on undecodable
    // answers up to the retry budget. Returns the parsed value or rethrows
    // the final UnparseableError.
    template <typename Parser>
    auto complete_parsed(const ModelRequest& request, const std::string& summary,
                         std::vector<TraceEntry>* trace, Parser&& parse) {
        int attempts_left = options_.parse_retries;
        while (true) {
            const ModelResponse response = complete_traced(request, summary, trace);
            try {
                return std::make_pair(parse(response.text), response.text);
            } catch (const UnparseableError&) {
                if (attempts_left-- <= 0) throw;
            }
        }
    }

    ScreenshotAssessment assess_screenshot(const App& app, int index,
                                           const std::filesystem::path& path,
                                           std::vector<TraceEntry>* trace,
                                           std::vector<std::string>* warnings) {
        ScreenshotAssessment assessment;
        assessment.screenshot_index = index;

        const EncodedImage image = encode_one(path);
        const std::string tag = "content[s" + std::to_string(index) + "]";

        std::vector<ContentCategory> detected;
        std::string raw_content;
        try {
            auto [parsed, raw] = complete_parsed(
                make_request(render_content_prompt(table_), {image}), tag, trace,
                [&](const std::string& text) {
                    return parse_content_response(text, table_);
                });
            detected = parsed.categories;
            raw_content = raw;
        } catch (const UnparseableError& e) {
            warn(warnings, app, "screenshot " + std::to_string(index) +
                                    ": unparseable content response (\"" + e.raw +
                                    "\"); treating as None");
            detected = {category_by_id(0)};
            raw_content = e.raw;
        } catch (const BackendRefusedError& e) {
            if (!options_.refusal_to_none) throw;
            warn(warnings, app, "screenshot " + std::to_string(index) +
                                    ": backend refused content request; treating as None");
            detected = {category_by_id(0)};
            raw_content = e.response_text;
        }

        for (const auto& category : detected) {
            ContentFinding finding;
            finding.screenshot_index = index;
            finding.category = category;
            finding.raw_content_response = raw_content;
            if (category.intensity_sensitive) {
                const std::string intensity_tag =
                    "intensity[s" + std::to_string(index) + ":" + category.label + "]";
                try {
                    auto [level, raw] = complete_parsed(
                        make_request(render_intensity_prompt(category), {image}),
                        intensity_tag, trace, parse_intensity_response);
                    finding.intensity = level;
                    finding.raw_intensity_response = raw;
                } catch (const UnparseableError& e) {
                    warn(warnings, app, "screenshot " + std::to_string(index) + ": \"" +
                                            category.label +
                                            "\" intensity unparseable (\"" + e.raw +
                                            "\"); grading as mild");
                    finding.intensity = IntensityLevel::Mild;
                    finding.raw_intensity_response = e.raw;
                } catch (const BackendRefusedError& e) {
                    if (!options_.refusal_to_none) throw;
                    warn(warnings, app, "screenshot " + std::to_string(index) + ": \"" +
                                            category.label +
                                            "\" intensity request refused; grading as mild");
                    finding.intensity = IntensityLevel::Mild;
                    finding.raw_intensity_response = e.response_text;
                }
            } else {
                finding.intensity = IntensityLevel::NotApplicable;
            }
            finding.severity = severity_of(table_, finding.category, finding.intensity);
            assessment.findings.push_back(std::move(finding));
        }

        assessment.max_severity = assessment.findings.front().severity;
        for (const auto& finding : assessment.findings)
            assessment.max_severity = std::max(assessment.max_severity, finding.severity);
        return assessment;
    }

    std::string request_caption(const EncodedImage& image, RatingDecision& decision) {
        const ModelResponse response =
            complete_traced(make_request(render_caption_prompt(), {image}),
                            "caption[s" + std::to_string(decision.selected_screenshots[0]) +
                                "]",
                            &decision.trace);
        return response.text;
    }

    RatingLevel request_rating(const std::string& description,
                               std::vector<EncodedImage> images, RatingDecision& decision) {
        const int count = static_cast<int>(images.size());
        const std::string tag = "rating[images=" + std::to_string(count) + "]";
        try {
            auto [rating, raw] = complete_parsed(
                make_request(render_rating_prompt(description, count), std::move(images)),
                tag, &decision.trace, parse_rating_response);
            (void)raw;
            return rating;
        } catch (const UnparseableError& e) {
            throw RatingUndeterminedError(
                "rating response unparseable for app " + decision.app_id + ": \"" + e.raw +
                    "\"",
                decision.trace);
        }
    }

    static void warn(std::vector<std::string>* warnings, const App& app,
                     const std::string& message) {
        if (warnings != nullptr) warnings->push_back("app " + app.id + ": " + message);
    }

    std::shared_ptr<ModelClient> client_;
    PolicyTable table_;
    PipelineOptions options_;
};

}  // namespace maturity
