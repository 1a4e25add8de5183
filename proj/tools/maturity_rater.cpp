// maturity-rater: rate mobile apps from descriptions and screenshots with a
// multimodal model driven through the chain-of-thought pipeline.

#include <algorithm>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "maturity/dataset.hpp"
#include "maturity/evaluator.hpp"
#include "maturity/pipeline.hpp"
#include "maturity/policy.hpp"
#include "maturity/runner.hpp"

namespace {

using namespace maturity;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

void add_backend_options(CLI::App* cmd, RunConfig& config, bool& no_cache) {
    cmd->add_option("--backend", config.backend, "Model backend: mock or http")
        ->check(CLI::IsMember({"mock", "http"}))
        ->capture_default_str();
    cmd->add_option("--fixture", config.fixture, "Mock backend answer script (JSON)");
    cmd->add_option("--base-url", config.base_url, "HTTP backend base URL");
    cmd->add_option("--model", config.model_id, "Model identifier")->capture_default_str();
    cmd->add_option("--policy", config.policy_file,
                    "Policy table JSON (default: builtin App Store table)");
    cmd->add_option("--temperature", config.temperature, "Sampling temperature")
        ->capture_default_str();
    cmd->add_option("--max-tokens", config.max_tokens, "Completion token limit")
        ->capture_default_str();
    cmd->add_option("--max-attempts", config.max_attempts, "Request attempts before giving up")
        ->capture_default_str();
    cmd->add_option("--rpm", config.requests_per_minute,
                    "Request rate limit per minute (0 = unlimited)")
        ->capture_default_str();
    cmd->add_option("--cache-dir", config.cache_dir,
                    "Response cache directory (or MATURITY_RATER_CACHE)");
    cmd->add_flag("--no-cache", no_cache, "Disable the response cache");
    cmd->add_option("--concurrency", config.concurrency, "Concurrent apps / in-flight requests")
        ->capture_default_str();
    cmd->add_option("--out", config.out_dir, "Output directory")->capture_default_str();
}

void add_pipeline_options(CLI::App* cmd, RunConfig& config) {
    cmd->add_option("-k,--k", config.k, "Top screenshots fused in selective CoT")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--seed", config.seed, "Seed for the random-selection ablation")
        ->capture_default_str();
    cmd->add_option("--parse-retries", config.parse_retries,
                    "Extra model calls after an unparseable answer")
        ->capture_default_str();
    cmd->add_flag("--append-findings", config.append_findings_to_rating_prompt,
                  "Append step-1 findings to the rating prompt");
}

const App& find_app(const std::vector<App>& apps, const std::string& id) {
    auto it = std::find_if(apps.begin(), apps.end(),
                           [&](const App& app) { return app.id == id; });
    if (it == apps.end()) throw Error("app id not found in manifest: \"" + id + "\"");
    return *it;
}

std::string findings_table(const std::vector<ScreenshotAssessment>& assessments) {
    std::ostringstream out;
    out << "  shot  category                               intensity  severity\n";
    for (const auto& assessment : assessments) {
        for (const auto& finding : assessment.findings) {
            out << "  " << std::left << std::setw(6) << finding.screenshot_index
                << std::setw(39) << finding.category.label << std::setw(11)
                << intensity_label(finding.intensity) << "(" << finding.severity.rating_rank
                << "," << finding.severity.row << ")\n";
        }
    }
    return out.str();
}

void print_decision(const RatingDecision& decision, bool verbose) {
    std::cout << "app:      " << decision.app_id << "\n"
              << "strategy: " << strategy_display_name(decision.strategy) << "\n"
              << "rating:   " << rating_label(decision.rating) << "\n";
    if (!decision.selected_screenshots.empty()) {
        std::cout << "selected: ";
        for (size_t i = 0; i < decision.selected_screenshots.size(); ++i)
            std::cout << (i > 0 ? ", " : "") << decision.selected_screenshots[i];
        std::cout << "\n";
    }
    if (!decision.assessments.empty())
        std::cout << "findings:\n" << findings_table(decision.assessments);
    for (const auto& warning : decision.warnings)
        std::cout << "warning:  " << warning << "\n";
    if (verbose) {
        std::cout << "trace:\n";
        for (const auto& entry : decision.trace)
            std::cout << "  > " << entry.summary << "\n    < " << entry.response_text << "\n";
    }
}

int cmd_rate(const RunConfig& config, const std::string& app_id, bool verbose) {
    const auto apps = load_dataset(config.manifest);
    const App& app = find_app(apps, app_id);

    auto client = make_client(config);
    Pipeline pipeline(client, make_policy(config), pipeline_options_from(config));
    const auto strategy = strategy_from_cli_name(config.strategies.at(0));
    if (!strategy) throw Error("unknown strategy: \"" + config.strategies.at(0) + "\"");

    const RatingDecision decision = pipeline.rate_app(app, *strategy);
    print_decision(decision, verbose);

    std::filesystem::create_directories(config.out_dir);
    const auto path = std::filesystem::path(config.out_dir) /
                      ("decision_" + app.id + "_" + std::string(strategy_cli_name(*strategy)) +
                       ".json");
    std::ofstream out(path);
    out << decision_to_json(decision).dump(2) << "\n";
    std::cout << "decision written to " << path.string() << "\n";
    return kExitOk;
}

int cmd_extract(const RunConfig& config, const std::string& app_id, bool verbose) {
    const auto apps = load_dataset(config.manifest);
    const App& app = find_app(apps, app_id);

    auto client = make_client(config);
    Pipeline pipeline(client, make_policy(config), pipeline_options_from(config));

    std::vector<TraceEntry> trace;
    std::vector<std::string> warnings;
    const auto assessments = pipeline.extract_findings(app, &trace, &warnings);

    std::cout << "app:      " << app.id << "\n"
              << "findings:\n"
              << findings_table(assessments);
    std::cout << "ranking:  ";
    const auto ranked = rank_screenshots(assessments);
    for (size_t i = 0; i < ranked.size(); ++i) std::cout << (i > 0 ? ", " : "") << ranked[i];
    std::cout << "\n";
    for (const auto& warning : warnings) std::cout << "warning:  " << warning << "\n";
    if (verbose) {
        std::cout << "trace:\n";
        for (const auto& entry : trace)
            std::cout << "  > " << entry.summary << "\n    < " << entry.response_text << "\n";
    }
    return kExitOk;
}

int cmd_experiment(const RunConfig& config) {
    auto client = make_client(config);
    const ExperimentOutputs outputs = run_and_write_experiment(config, client);

    std::ifstream table(outputs.report_txt_path);
    std::cout << table.rdbuf();
    std::cout << "\nrun " << outputs.run_id << ": outputs under " << config.out_dir << "\n";

    std::ifstream decisions_file(outputs.decisions_path);
    nlohmann::json decisions_doc;
    decisions_file >> decisions_doc;
    const size_t failure_count = decisions_doc["failures"].size();
    const size_t decision_count = decisions_doc["decisions"].size();
    if (failure_count > 0) {
        std::cout << failure_count << " app/strategy failures (see decisions.json)\n";
        for (const auto& failure : decisions_doc["failures"])
            std::cout << "  " << failure["app_id"].get<std::string>() << " ["
                      << failure["strategy"].get<std::string>()
                      << "]: " << failure["message"].get<std::string>() << "\n";
    }
    return decision_count > 0 ? kExitOk : kExitFailure;
}

int cmd_validate(const std::string& manifest) {
    const ManifestValidation validation = validate_manifest_file(manifest);
    for (const auto& error : validation.errors) std::cout << "error: " << error << "\n";
    for (const auto& warning : validation.warnings) std::cout << "warning: " << warning << "\n";
    if (!validation.ok()) {
        std::cout << validation.errors.size() << " violation(s)\n";
        return kExitFailure;
    }

    const DatasetStats stats = dataset_stats(validation.apps);
    std::cout << "apps:        " << stats.total << "\n";
    for (RatingLevel rating : all_ratings()) {
        auto it = stats.per_rating.find(rating);
        std::cout << "  rated " << std::left << std::setw(4) << rating_label(rating) << " "
                  << (it == stats.per_rating.end() ? 0 : it->second) << "\n";
    }
    if (stats.unlabeled > 0) std::cout << "  unlabeled  " << stats.unlabeled << "\n";
    std::cout << "screenshots: min " << stats.screenshots_min << ", max "
              << stats.screenshots_max << ", mean " << std::fixed << std::setprecision(2)
              << stats.screenshots_mean << "\n";
    return kExitOk;
}

int cmd_cache_stats(const RunConfig& config) {
    auto cache = make_cache(config);
    std::cout << "cache dir: " << cache->root().string() << "\n"
              << "entries:   " << cache->entry_count() << "\n"
              << "bytes:     " << cache->total_bytes() << "\n";
    return kExitOk;
}

int cmd_cache_clear(const RunConfig& config) {
    auto cache = make_cache(config);
    const size_t removed = cache->clear();
    std::cout << "removed " << removed << " entries from " << cache->root().string() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"App maturity rating via a chain-of-thought multimodal model pipeline"};
    app.require_subcommand(1);

    RunConfig config;
    std::string app_id;
    std::string strategy_name = "selective-cot";
    std::string config_path;
    bool verbose = false;
    bool no_cache = false;

    auto* rate = app.add_subcommand("rate", "Rate a single app");
    rate->add_option("--manifest", config.manifest, "App manifest JSON")->required();
    rate->add_option("--app-id", app_id, "App id within the manifest")->required();
    rate->add_option("--strategy", strategy_name, "Fusion strategy")->capture_default_str();
    rate->add_flag("-v,--verbose", verbose, "Print the request/response trace");
    add_pipeline_options(rate, config);
    add_backend_options(rate, config, no_cache);

    auto* extract = app.add_subcommand("extract", "Run step-1 extraction for a single app");
    extract->add_option("--manifest", config.manifest, "App manifest JSON")->required();
    extract->add_option("--app-id", app_id, "App id within the manifest")->required();
    extract->add_flag("-v,--verbose", verbose, "Print the request/response trace");
    add_pipeline_options(extract, config);
    add_backend_options(extract, config, no_cache);

    auto* experiment =
        app.add_subcommand("experiment", "Run strategies over a dataset and write reports");
    experiment->add_option("--manifest", config.manifest, "App manifest JSON");
    experiment
        ->add_option("--strategies", strategy_name,
                     "Comma-separated strategy list (default selective-cot)")
        ->capture_default_str();
    experiment->add_option("--config", config_path,
                           "Load a previously written run_config.json (flags override)");
    add_pipeline_options(experiment, config);
    add_backend_options(experiment, config, no_cache);

    auto* validate = app.add_subcommand("validate", "Validate a manifest and print stats");
    validate->add_option("--manifest", config.manifest, "App manifest JSON")->required();

    auto* cache = app.add_subcommand("cache", "Inspect or clear the response cache");
    cache->require_subcommand(1);
    auto* cache_stats = cache->add_subcommand("stats", "Show entry count and size");
    auto* cache_clear = cache->add_subcommand("clear", "Remove all cache entries");
    for (auto* sub : {cache_stats, cache_clear}) {
        sub->add_option("--cache-dir", config.cache_dir,
                        "Cache directory (or MATURITY_RATER_CACHE)");
        sub->add_option("--out", config.out_dir, "Output directory")->capture_default_str();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    if (no_cache) config.cache_enabled = false;

    try {
        if (rate->parsed() || extract->parsed()) {
            config.strategies = {strategy_name};
            return rate->parsed() ? cmd_rate(config, app_id, verbose)
                                  : cmd_extract(config, app_id, verbose);
        }
        if (experiment->parsed()) {
            if (!config_path.empty()) {
                RunConfig loaded = load_run_config(config_path);
                // Explicit flags win over the loaded config.
                if (experiment->count("--manifest") == 0) config.manifest = loaded.manifest;
                if (experiment->count("--strategies") == 0) config.strategies = loaded.strategies;
                if (experiment->count("--k") == 0) config.k = loaded.k;
                if (experiment->count("--seed") == 0) config.seed = loaded.seed;
                if (experiment->count("--backend") == 0) config.backend = loaded.backend;
                if (experiment->count("--base-url") == 0) config.base_url = loaded.base_url;
                if (experiment->count("--fixture") == 0) config.fixture = loaded.fixture;
                if (experiment->count("--model") == 0) config.model_id = loaded.model_id;
                if (experiment->count("--policy") == 0)
                    config.policy_file = loaded.policy_file;
                if (experiment->count("--cache-dir") == 0) config.cache_dir = loaded.cache_dir;
                if (experiment->count("--no-cache") == 0)
                    config.cache_enabled = loaded.cache_enabled;
                if (experiment->count("--out") == 0) config.out_dir = loaded.out_dir;
                if (experiment->count("--concurrency") == 0)
                    config.concurrency = loaded.concurrency;
                if (experiment->count("--temperature") == 0)
                    config.temperature = loaded.temperature;
                if (experiment->count("--max-tokens") == 0) config.max_tokens = loaded.max_tokens;
                if (experiment->count("--max-attempts") == 0)
                    config.max_attempts = loaded.max_attempts;
                if (experiment->count("--rpm") == 0)
                    config.requests_per_minute = loaded.requests_per_minute;
                if (experiment->count("--parse-retries") == 0)
                    config.parse_retries = loaded.parse_retries;
                if (experiment->count("--append-findings") == 0)
                    config.append_findings_to_rating_prompt =
                        loaded.append_findings_to_rating_prompt;
            }
            if (experiment->count("--strategies") > 0 || config_path.empty()) {
                config.strategies.clear();
                std::stringstream names(strategy_name);
                std::string name;
                while (std::getline(names, name, ','))
                    if (!name.empty()) config.strategies.push_back(name);
            }
            if (config.manifest.empty())
                throw Error("experiment requires --manifest (or --config)");
            return cmd_experiment(config);
        }
        if (validate->parsed()) return cmd_validate(config.manifest);
        if (cache_stats->parsed()) return cmd_cache_stats(config);
        if (cache_clear->parsed()) return cmd_cache_clear(config);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}
