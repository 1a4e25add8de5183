#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "maturity/cache.hpp"
#include "maturity/dataset.hpp"
#include "maturity/evaluator.hpp"
#include "maturity/model.hpp"
#include "maturity/pipeline.hpp"

namespace maturity {

constexpr const char* kCacheEnvVar = "MATURITY_RATER_CACHE";

// Fully-resolved run configuration. Serialized verbatim into every run output
// so a run can be reproduced from its artifacts.
struct RunConfig {
    std::string manifest;
    std::vector<std::string> strategies = {"selective-cot"};
    int k = 1;
    uint64_t seed = 0;
    std::string backend = "mock";  // "mock" or "http"
    std::string base_url;
    std::string fixture;  // mock backend answer script
    std::string model_id = "gpt-4-vision-preview";
    std::string policy_file;  // empty -> builtin App Store table
    std::string cache_dir;
    bool cache_enabled = true;
    std::string out_dir = "out";
    int concurrency = 4;
    double temperature = 0.0;
    int max_tokens = 256;
    int max_image_side = kDefaultMaxImageSide;
    int max_attempts = 3;
    int requests_per_minute = 0;
    int parse_retries = 1;
    bool append_findings_to_rating_prompt = false;
};

inline nlohmann::json run_config_to_json(const RunConfig& config) {
    return nlohmann::json{
        {"manifest", config.manifest},
        {"strategies", config.strategies},
        {"k", config.k},
        {"seed", config.seed},
        {"backend", config.backend},
        {"base_url", config.base_url},
        {"fixture", config.fixture},
        {"model_id", config.model_id},
        {"policy_file", config.policy_file},
        {"cache_dir", config.cache_dir},
        {"cache_enabled", config.cache_enabled},
        {"out_dir", config.out_dir},
        {"concurrency", config.concurrency},
        {"temperature", config.temperature},
        {"max_tokens", config.max_tokens},
        {"max_image_side", config.max_image_side},
        {"max_attempts", config.max_attempts},
        {"requests_per_minute", config.requests_per_minute},
        {"parse_retries", config.parse_retries},
        {"append_findings_to_rating_prompt", config.append_findings_to_rating_prompt}};
}

inline RunConfig run_config_from_json(const nlohmann::json& doc) {
    RunConfig defaults;
    RunConfig config;
    config.manifest = doc.value("manifest", defaults.manifest);
    config.strategies = doc.value("strategies", defaults.strategies);
    config.k = doc.value("k", defaults.k);
    config.seed = doc.value("seed", defaults.seed);
    config.backend = doc.value("backend", defaults.backend);
    config.base_url = doc.value("base_url", defaults.base_url);
    config.fixture = doc.value("fixture", defaults.fixture);
    config.model_id = doc.value("model_id", defaults.model_id);
    config.policy_file = doc.value("policy_file", defaults.policy_file);
    config.cache_dir = doc.value("cache_dir", defaults.cache_dir);
    config.cache_enabled = doc.value("cache_enabled", defaults.cache_enabled);
    config.out_dir = doc.value("out_dir", defaults.out_dir);
    config.concurrency = doc.value("concurrency", defaults.concurrency);
    config.temperature = doc.value("temperature", defaults.temperature);
    config.max_tokens = doc.value("max_tokens", defaults.max_tokens);
    config.max_image_side = doc.value("max_image_side", defaults.max_image_side);
    config.max_attempts = doc.value("max_attempts", defaults.max_attempts);
    config.requests_per_minute = doc.value("requests_per_minute", defaults.requests_per_minute);
    config.parse_retries = doc.value("parse_retries", defaults.parse_retries);
    config.append_findings_to_rating_prompt =
        doc.value("append_findings_to_rating_prompt",
                  defaults.append_findings_to_rating_prompt);
    return config;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FileNotFoundError("config not found: " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw Error(path.string() + ": malformed config JSON: " + e.what());
    }
    return run_config_from_json(doc);
}

inline PipelineOptions pipeline_options_from(const RunConfig& config) {
    PipelineOptions options;
    options.model_id = config.model_id;
    options.temperature = config.temperature;
    options.max_tokens = config.max_tokens;
    options.max_image_side = config.max_image_side;
    options.k = config.k;
    options.seed = config.seed;
    options.parse_retries = config.parse_retries;
    options.append_findings_to_rating_prompt = config.append_findings_to_rating_prompt;
    options.concurrency = config.concurrency;
    return options;
}

inline PolicyTable make_policy(const RunConfig& config) {
    return config.policy_file.empty() ? builtin_policy()
                                      : load_policy_file(config.policy_file);
}

inline std::shared_ptr<ModelBackend> make_backend(const RunConfig& config) {
    if (config.backend == "mock") {
        if (config.fixture.empty())
            throw Error("mock backend requires --fixture");
        return MockBackend::from_fixture(config.fixture);
    }
    if (config.backend == "http") {
        HttpBackendOptions options;
        options.base_url = config.base_url;
        return std::make_shared<HttpBackend>(options);
    }
    throw Error("unknown backend: \"" + config.backend + "\" (expected mock or http)");
}

// Cache dir resolution: explicit config, then MATURITY_RATER_CACHE, then a
// default under the output directory.
inline std::shared_ptr<CacheStore> make_cache(const RunConfig& config) {
    if (!config.cache_enabled) return nullptr;
    std::string dir = config.cache_dir;
    if (dir.empty()) {
        const char* env = std::getenv(kCacheEnvVar);
        if (env != nullptr) dir = env;
    }
    if (dir.empty()) dir = (std::filesystem::path(config.out_dir) / "cache").string();
    return std::make_shared<CacheStore>(dir);
}

inline std::shared_ptr<ModelClient> make_client(const RunConfig& config) {
    ClientOptions options;
    options.max_attempts = config.max_attempts;
    options.requests_per_minute = config.requests_per_minute;
    options.max_in_flight = config.concurrency;
    return std::make_shared<ModelClient>(make_backend(config), make_cache(config), options);
}

// ---------------------------------------------------------------------------
// Decision serialization (deterministic: no timestamps, no latencies)
// ---------------------------------------------------------------------------

inline nlohmann::json finding_to_json(const ContentFinding& finding) {
    nlohmann::json doc{{"screenshot", finding.screenshot_index},
                       {"category_id", finding.category.id},
                       {"category", finding.category.label},
                       {"intensity", std::string(intensity_label(finding.intensity))},
                       {"severity",
                        {{"rating_rank", finding.severity.rating_rank},
                         {"row", finding.severity.row}}},
                       {"raw_content_response", finding.raw_content_response}};
    if (finding.raw_intensity_response)
        doc["raw_intensity_response"] = *finding.raw_intensity_response;
    return doc;
}

inline nlohmann::json decision_to_json(const RatingDecision& decision) {
    nlohmann::json assessments = nlohmann::json::array();
    for (const auto& assessment : decision.assessments) {
        nlohmann::json findings = nlohmann::json::array();
        for (const auto& finding : assessment.findings)
            findings.push_back(finding_to_json(finding));
        assessments.push_back({{"screenshot", assessment.screenshot_index},
                               {"findings", findings},
                               {"max_severity",
                                {{"rating_rank", assessment.max_severity.rating_rank},
                                 {"row", assessment.max_severity.row}}}});
    }
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& entry : decision.trace) {
        trace.push_back({{"kind", std::string(prompt_kind_label(entry.kind))},
                         {"summary", entry.summary},
                         {"image_digests", entry.image_digests},
                         {"response_text", entry.response_text}});
    }
    return nlohmann::json{
        {"app_id", decision.app_id},
        {"strategy", std::string(strategy_cli_name(decision.strategy))},
        {"rating", std::string(rating_label(decision.rating))},
        {"k", decision.k},
        {"selected_screenshots", decision.selected_screenshots},
        {"assessments", assessments},
        {"trace", trace},
        {"warnings", decision.warnings}};
}

// ---------------------------------------------------------------------------
// Experiment outputs
// ---------------------------------------------------------------------------

struct ExperimentOutputs {
    std::filesystem::path decisions_path;
    std::filesystem::path report_json_path;
    std::filesystem::path report_csv_path;
    std::filesystem::path report_txt_path;
    std::vector<std::filesystem::path> confusion_paths;
    std::string run_id;
    std::vector<MetricsReport> reports;
};

// Stable across reruns of the same config + manifest content.
inline std::string deterministic_run_id(const RunConfig& config) {
    std::string material = run_config_to_json(config).dump();
    std::ifstream in(config.manifest, std::ios::binary);
    if (in) {
        std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
        material += bytes;
    }
    return detail::sha256_hex(material).substr(0, 12);
}

inline std::vector<MetricsReport> evaluate_decisions(
    const std::vector<App>& apps, const std::vector<RatingDecision>& decisions,
    const std::vector<FusionStrategy>& strategies,
    std::map<FusionStrategy, ConfusionMatrix>* matrices_out = nullptr) {
    std::map<std::string, RatingLevel> ground_truth;
    for (const auto& app : apps)
        if (app.ground_truth) ground_truth[app.id] = *app.ground_truth;

    std::vector<MetricsReport> reports;
    for (FusionStrategy strategy : strategies) {
        std::vector<std::pair<RatingLevel, RatingLevel>> pairs;
        for (const auto& decision : decisions) {
            if (decision.strategy != strategy) continue;
            auto gt = ground_truth.find(decision.app_id);
            if (gt == ground_truth.end()) continue;
            pairs.emplace_back(gt->second, decision.rating);
        }
        const ConfusionMatrix matrix = confusion_matrix(pairs);
        MetricsReport report = metrics(matrix);
        report.strategy_label = std::string(strategy_display_name(strategy));
        report.modality = std::string(strategy_modality(strategy));
        reports.push_back(report);
        if (matrices_out != nullptr) (*matrices_out)[strategy] = matrix;
    }
    return reports;
}

namespace detail {

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
}

}  // namespace detail

// Runs every requested strategy over the manifest and writes the full output
// set under config.out_dir. All files are byte-deterministic for a given
// config, manifest and cache state.
inline ExperimentOutputs run_and_write_experiment(const RunConfig& config,
                                                  const std::shared_ptr<ModelClient>& client) {
    namespace fs = std::filesystem;
    const std::vector<App> apps = load_dataset(config.manifest);

    std::vector<FusionStrategy> strategies;
    for (const auto& name : config.strategies) {
        const auto strategy = strategy_from_cli_name(name);
        if (!strategy) throw Error("unknown strategy: \"" + name + "\"");
        strategies.push_back(*strategy);
    }
    if (strategies.empty()) throw Error("no strategies requested");

    Pipeline pipeline(client, make_policy(config), pipeline_options_from(config));
    const ExperimentResult result = pipeline.run_experiment(apps, strategies);

    ExperimentOutputs outputs;
    outputs.run_id = deterministic_run_id(config);

    fs::create_directories(config.out_dir);
    const fs::path out_dir(config.out_dir);

    nlohmann::json decisions = nlohmann::json::array();
    for (const auto& decision : result.decisions)
        decisions.push_back(decision_to_json(decision));
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& failure : result.failures)
        failures.push_back({{"app_id", failure.app_id},
                            {"strategy", std::string(strategy_cli_name(failure.strategy))},
                            {"message", failure.message}});
    const nlohmann::json decisions_doc{{"run_id", outputs.run_id},
                                       {"config", run_config_to_json(config)},
                                       {"decisions", decisions},
                                       {"failures", failures}};
    outputs.decisions_path = out_dir / "decisions.json";
    detail::write_text_file(outputs.decisions_path, decisions_doc.dump(2) + "\n");

    std::map<FusionStrategy, ConfusionMatrix> matrices;
    outputs.reports = evaluate_decisions(apps, result.decisions, strategies, &matrices);

    outputs.report_json_path = out_dir / "report.json";
    detail::write_text_file(outputs.report_json_path,
                            render_report(outputs.reports, ReportFormat::Json));
    outputs.report_csv_path = out_dir / "report.csv";
    detail::write_text_file(outputs.report_csv_path,
                            render_report(outputs.reports, ReportFormat::Csv));
    outputs.report_txt_path = out_dir / "report.txt";
    detail::write_text_file(outputs.report_txt_path,
                            render_report(outputs.reports, ReportFormat::TableText));

    for (const auto& [strategy, matrix] : matrices) {
        const fs::path path =
            out_dir / ("confusion_" + std::string(strategy_cli_name(strategy)) + ".csv");
        detail::write_text_file(path, confusion_matrix_csv(matrix));
        outputs.confusion_paths.push_back(path);
    }

    detail::write_text_file(out_dir / "run_config.json",
                            run_config_to_json(config).dump(2) + "\n");
    return outputs;
}

}  // namespace maturity
