#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "maturity/cache.hpp"
#include "maturity/errors.hpp"
#include "maturity/image.hpp"
#include "maturity/prompts.hpp"

namespace maturity {

constexpr const char* kApiKeyEnvVar = "MATURITY_RATER_API_KEY";

enum class BackendKind { Http, Mock };

inline std::string_view backend_kind_label(BackendKind kind) {
    return kind == BackendKind::Http ? "http" : "mock";
}

struct ModelRequest {
    std::string model_id;
    double temperature = 0.0;  // deterministic by default
    PromptText prompt;
    std::vector<EncodedImage> images;
    int max_tokens = 256;
};

struct ModelResponse {
    std::string text;
    BackendKind backend = BackendKind::Mock;
    bool from_cache = false;
    std::chrono::milliseconds latency{0};
};

// f_MLLM: one call, no retries or caching. Those live in ModelClient.
class ModelBackend {
public:
    virtual ~ModelBackend() = default;
    virtual BackendKind kind() const = 0;
    virtual std::string complete_once(const ModelRequest& request) = 0;
};

namespace detail {

// Content-policy declines look like apologies, not answers. Detected on the
// response text regardless of whether it came from the wire or the cache.
inline bool is_refusal_text(const std::string& text) {
    const std::string lowered = to_lower(text);
    static const char* prefixes[] = {
        "i'm sorry",   "i am sorry",  "sorry, ",      "i cannot assist",
        "i can't assist", "i cannot help", "i can't help", "i'm unable to",
        "i am unable to", "i won't be able to",
    };
    for (const char* prefix : prefixes)
        if (lowered.rfind(prefix, 0) == 0) return true;
    return lowered.find("content policy") != std::string::npos ||
           lowered.find("cannot comply") != std::string::npos;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Mock backend
// ---------------------------------------------------------------------------

// Scripted backend for deterministic runs. Answers are looked up by
// (prompt kind, first image digest); requests without images use an empty
// digest. Unmapped digests fall back to the per-kind default.
//
// Fixture format:
//   {"defaults": {"content": "0", "intensity": "mild", "rating": "4+",
//                 "caption": "..."},
//    "answers": [{"digest": "<sha256>", "kind": "content", "text": "5"}, ...]}
class MockBackend : public ModelBackend {
public:
    struct Call {
        PromptKind kind;
        std::string first_digest;
    };

    static std::shared_ptr<MockBackend> from_json(const nlohmann::json& doc,
                                                  std::string source = "fixture") {
        auto backend = std::make_shared<MockBackend>();
        if (!doc.is_object())
            throw Error(source + ": malformed fixture, expected an object");
        try {
            if (doc.contains("defaults")) {
                for (const auto& [key, value] : doc["defaults"].items())
                    backend->defaults_[parse_kind(key, source)] = value.get<std::string>();
            }
            if (doc.contains("answers")) {
                for (const auto& entry : doc["answers"]) {
                    const auto kind = parse_kind(entry.at("kind").get<std::string>(), source);
                    backend->answers_[{kind, entry.at("digest").get<std::string>()}] =
                        entry.at("text").get<std::string>();
                }
            }
        } catch (const nlohmann::json::exception& e) {
            throw Error(source + ": malformed fixture: " + e.what());
        }
        return backend;
    }

    static std::shared_ptr<MockBackend> from_fixture(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw FileNotFoundError("fixture not found: " + path.string());
        nlohmann::json doc;
        try {
            in >> doc;
        } catch (const nlohmann::json::exception& e) {
            throw Error(path.string() + ": malformed fixture JSON: " + e.what());
        }
        return from_json(doc, path.string());
    }

    BackendKind kind() const override { return BackendKind::Mock; }

    std::string complete_once(const ModelRequest& request) override {
        const std::string digest =
            request.images.empty() ? std::string() : request.images.front().bytes_digest;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            transcript_.push_back({request.prompt.kind, digest});
        }
        auto scripted = answers_.find({request.prompt.kind, digest});
        if (scripted != answers_.end()) return scripted->second;
        auto fallback = defaults_.find(request.prompt.kind);
        if (fallback != defaults_.end()) return fallback->second;
        throw Error("no answer scripted for kind=" +
                    std::string(prompt_kind_label(request.prompt.kind)) + " digest=" +
                    (digest.empty() ? "<none>" : digest));
    }

    void script_answer(PromptKind kind, const std::string& digest, const std::string& text) {
        answers_[{kind, digest}] = text;
    }

    void script_default(PromptKind kind, const std::string& text) {
        defaults_[kind] = text;
    }

    std::vector<Call> transcript() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return transcript_;
    }

    size_t call_count() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return transcript_.size();
    }

private:
    static PromptKind parse_kind(const std::string& label, const std::string& source) {
        if (label == "content") return PromptKind::Content;
        if (label == "intensity") return PromptKind::Intensity;
        if (label == "rating") return PromptKind::Rating;
        if (label == "caption") return PromptKind::Caption;
        throw Error(source + ": unknown prompt kind: \"" + label + "\"");
    }

    std::map<std::pair<PromptKind, std::string>, std::string> answers_;
    std::map<PromptKind, std::string> defaults_;
    mutable std::mutex mutex_;
    std::vector<Call> transcript_;
};

// ---------------------------------------------------------------------------
// HTTP backend
// ---------------------------------------------------------------------------

struct HttpBackendOptions {
    std::string base_url;  // e.g. "https://api.openai.com" or "http://127.0.0.1:8089"
    std::string api_key;   // empty -> read MATURITY_RATER_API_KEY
    std::chrono::seconds read_timeout{120};
    std::chrono::seconds connect_timeout{10};
};

// Chat-completions wire protocol:
//   POST {base_url}/v1/chat/completions
//   {"model", "temperature", "max_tokens",
//    "messages": [{"role": "user", "content": [{"type": "text", "text": ...},
//      {"type": "image_url", "image_url": {"url": "data:<type>;base64,<payload>"}}...]}]}
// The answer is read from choices[0].message.content.
class HttpBackend : public ModelBackend {
public:
    explicit HttpBackend(HttpBackendOptions options) : options_(std::move(options)) {
        if (options_.api_key.empty()) {
            const char* from_env = std::getenv(kApiKeyEnvVar);
            if (from_env != nullptr) options_.api_key = from_env;
        }
        split_base_url(options_.base_url, host_, path_prefix_);
    }

    BackendKind kind() const override { return BackendKind::Http; }

    std::string complete_once(const ModelRequest& request) override {
        nlohmann::json content = nlohmann::json::array();
        content.push_back({{"type", "text"}, {"text", request.prompt.text}});
        for (const auto& image : request.images) {
            content.push_back(
                {{"type", "image_url"},
                 {"image_url",
                  {{"url", "data:" + image.media_type + ";base64," + image.payload}}}});
        }
        const nlohmann::json body{
            {"model", request.model_id},
            {"temperature", request.temperature},
            {"max_tokens", request.max_tokens},
            {"messages",
             nlohmann::json::array({{{"role", "user"}, {"content", content}}})}};

        httplib::Client client(host_);
        client.set_connection_timeout(options_.connect_timeout);
        client.set_read_timeout(options_.read_timeout);
        httplib::Headers headers;
        if (!options_.api_key.empty())
            headers.emplace("Authorization", "Bearer " + options_.api_key);

        auto result = client.Post(path_prefix_ + "/v1/chat/completions", headers,
                                  body.dump(), "application/json");
        if (!result)
            throw TransportError("request to " + host_ +
                                 " failed: " + httplib::to_string(result.error()));
        if (result->status == 401 || result->status == 403)
            throw AuthError("backend rejected credential (HTTP " +
                            std::to_string(result->status) + ")");
        if (result->status == 429)
            throw RateLimitedError("backend rate limit (HTTP 429)");
        if (result->status < 200 || result->status >= 300)
            throw TransportError("backend returned HTTP " + std::to_string(result->status) +
                                 ": " + result->body.substr(0, 200));

        try {
            const auto doc = nlohmann::json::parse(result->body);
            return doc.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw TransportError(std::string("malformed completion response: ") + e.what());
        }
    }

private:
    static void split_base_url(const std::string& base_url, std::string& host,
                               std::string& prefix) {
        if (base_url.empty()) throw Error("http backend requires a base URL");
        const size_t scheme_end = base_url.find("://");
        const size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
        const size_t slash = base_url.find('/', host_start);
        if (slash == std::string::npos) {
            host = base_url;
            prefix.clear();
        } else {
            host = base_url.substr(0, slash);
            prefix = base_url.substr(slash);
            while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
        }
    }

    HttpBackendOptions options_;
    std::string host_;
    std::string path_prefix_;
};

// ---------------------------------------------------------------------------
// Rate limiting
// ---------------------------------------------------------------------------

// Token bucket over requests/minute plus a bound on concurrent in-flight
// requests. rpm <= 0 disables the bucket.
class RateLimiter {
public:
    RateLimiter(int requests_per_minute, int max_in_flight)
        : rpm_(requests_per_minute),
          tokens_(requests_per_minute),
          in_flight_limit_(max_in_flight > 0 ? max_in_flight : 1),
          last_refill_(std::chrono::steady_clock::now()) {}

    class Slot {
    public:
        explicit Slot(RateLimiter& limiter) : limiter_(limiter) { limiter_.enter(); }
        ~Slot() { limiter_.leave(); }
        Slot(const Slot&) = delete;
        Slot& operator=(const Slot&) = delete;

    private:
        RateLimiter& limiter_;
    };

private:
    friend class Slot;

    void enter() {
        std::unique_lock<std::mutex> lock(mutex_);
        in_flight_cv_.wait(lock, [&] { return in_flight_ < in_flight_limit_; });
        ++in_flight_;
        if (rpm_ <= 0) return;
        refill();
        while (tokens_ < 1.0) {
            const auto deficit = 1.0 - tokens_;
            const auto wait = std::chrono::duration<double>(deficit * 60.0 / rpm_);
            token_cv_.wait_for(lock,
                               std::chrono::duration_cast<std::chrono::milliseconds>(wait) +
                                   std::chrono::milliseconds(1));
            refill();
        }
        tokens_ -= 1.0;
    }

    void leave() {
        {
            std::lock_guard<std::mutex> lock(mutex_);
            --in_flight_;
        }
        in_flight_cv_.notify_one();
    }

    void refill() {
        const auto now = std::chrono::steady_clock::now();
        const std::chrono::duration<double> elapsed = now - last_refill_;
        last_refill_ = now;
        tokens_ = std::min(static_cast<double>(rpm_), tokens_ + elapsed.count() * rpm_ / 60.0);
    }

    const int rpm_;
    double tokens_;
    const int in_flight_limit_;
    int in_flight_ = 0;
    std::chrono::steady_clock::time_point last_refill_;
    std::mutex mutex_;
    std::condition_variable token_cv_;
    std::condition_variable in_flight_cv_;
};

// ---------------------------------------------------------------------------
// Client
// ---------------------------------------------------------------------------

struct ClientOptions {
    int max_attempts = 3;
    std::chrono::milliseconds retry_initial_delay{250};
    int requests_per_minute = 0;  // 0 = unlimited
    int max_in_flight = 4;
};

struct ClientStats {
    uint64_t backend_calls = 0;
    uint64_t cache_hits = 0;
    uint64_t retries = 0;
};

// Front door for all model traffic: cache consultation, rate limiting,
// retries with exponential backoff, refusal detection.
class ModelClient {
public:
    ModelClient(std::shared_ptr<ModelBackend> backend,
                std::shared_ptr<CacheStore> cache = nullptr,
                ClientOptions options = {})
        : backend_(std::move(backend)),
          cache_(std::move(cache)),
          options_(options),
          limiter_(options.requests_per_minute, options.max_in_flight) {
        if (!backend_) throw Error("model client requires a backend");
        if (options_.max_attempts < 1) throw Error("max_attempts must be >= 1");
    }

    BackendKind backend_kind() const { return backend_->kind(); }
    const std::shared_ptr<ModelBackend>& backend() const { return backend_; }
    bool caching_enabled() const { return cache_ != nullptr; }

    ModelResponse complete(const ModelRequest& request) {
        validate(request);
        const auto started = std::chrono::steady_clock::now();

        const CacheKey key = request_key(request);
        if (cache_) {
            if (auto entry = cache_->get(key)) {
                cache_hits_.fetch_add(1);
                ModelResponse response;
                response.text = entry->response_text;
                response.backend = backend_->kind();
                response.from_cache = true;
                response.latency = elapsed_since(started);
                if (detail::is_refusal_text(response.text))
                    throw BackendRefusedError(response.text);
                return response;
            }
        }

        std::string text;
        {
            RateLimiter::Slot slot(limiter_);
            text = call_with_retries(request);
        }
        if (text.empty()) throw TransportError("backend returned an empty response");

        if (cache_) {
            CacheEntry entry;
            entry.key = key;
            entry.response_text = text;
            entry.model_id = request.model_id;
            entry.created_at = utc_timestamp_now();
            entry.request_summary = request_summary(request);
            cache_->put(entry);
        }

        ModelResponse response;
        response.text = text;
        response.backend = backend_->kind();
        response.from_cache = false;
        response.latency = elapsed_since(started);
        if (detail::is_refusal_text(response.text)) throw BackendRefusedError(response.text);
        return response;
    }

    CacheKey request_key(const ModelRequest& request) const {
        std::vector<std::string> digests;
        digests.reserve(request.images.size());
        for (const auto& image : request.images) digests.push_back(image.bytes_digest);
        return make_cache_key(cache_key_document(
            std::string(backend_kind_label(backend_->kind())), request.model_id,
            request.temperature, request.prompt.text, digests, request.max_tokens));
    }

    ClientStats stats() const {
        return ClientStats{backend_calls_.load(), cache_hits_.load(), retries_.load()};
    }

private:
    static void validate(const ModelRequest& request) {
        if (request.prompt.expects_image && request.images.empty())
            throw Error("prompt expects an image but none attached");
        if (!request.prompt.expects_image && !request.images.empty())
            throw Error("prompt does not take images but " +
                        std::to_string(request.images.size()) + " attached");
    }

    static std::string request_summary(const ModelRequest& request) {
        std::string summary = std::string(prompt_kind_label(request.prompt.kind)) +
                              " prompt, model=" + request.model_id +
                              ", images=" + std::to_string(request.images.size());
        return summary;
    }

    static std::chrono::milliseconds elapsed_since(
        std::chrono::steady_clock::time_point start) {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - start);
    }

    std::string call_with_retries(const ModelRequest& request) {
        auto delay = options_.retry_initial_delay;
        for (int attempt = 1;; ++attempt) {
            try {
                backend_calls_.fetch_add(1);
                return backend_->complete_once(request);
            } catch (const AuthError&) {
                throw;
            } catch (const BackendError&) {
                // RateLimited and Transport are transient; back off and retry.
                if (attempt >= options_.max_attempts) throw;
                retries_.fetch_add(1);
                if (delay.count() > 0) std::this_thread::sleep_for(delay);
                delay *= 2;
            }
        }
    }

    std::shared_ptr<ModelBackend> backend_;
    std::shared_ptr<CacheStore> cache_;
    ClientOptions options_;
    RateLimiter limiter_;
    std::atomic<uint64_t> backend_calls_{0};
    std::atomic<uint64_t> cache_hits_{0};
    std::atomic<uint64_t> retries_{0};
};

}  // namespace maturity
