#pragma once

#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "maturity/errors.hpp"
#include "maturity/image.hpp"

namespace maturity {

// Content address of a model request: any change to the request changes the
// digest, equal requests collide.
struct CacheKey {
    std::string digest;

    bool operator==(const CacheKey&) const = default;
};

struct CacheEntry {
    CacheKey key;
    std::string response_text;
    std::string model_id;
    std::string created_at;       // ISO 8601 UTC
    std::string request_summary;  // human-readable, for auditing entry files
};

// Canonical serialization of the request identity. nlohmann::json keeps
// object keys sorted, so dump() is stable.
inline nlohmann::json cache_key_document(const std::string& backend_kind,
                                         const std::string& model_id,
                                         double temperature,
                                         const std::string& prompt_text,
                                         const std::vector<std::string>& image_digests,
                                         int max_tokens) {
    return nlohmann::json{{"backend", backend_kind},
                          {"model", model_id},
                          {"temperature", temperature},
                          {"prompt", prompt_text},
                          {"images", image_digests},
                          {"max_tokens", max_tokens}};
}

inline CacheKey make_cache_key(const nlohmann::json& key_document) {
    return CacheKey{detail::sha256_hex(key_document.dump())};
}

inline std::string utc_timestamp_now() {
    std::time_t now = std::time(nullptr);
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    char buffer[32];
    std::strftime(buffer, sizeof(buffer), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buffer;
}

// One pretty-printed JSON file per entry under the cache root. Writers go
// through a temp-file-then-rename so concurrent puts never expose partial
// entries.
class CacheStore {
public:
    explicit CacheStore(std::filesystem::path root) : root_(std::move(root)) {
        std::error_code ec;
        std::filesystem::create_directories(root_, ec);
        if (ec) throw IoError("cannot create cache dir " + root_.string() + ": " + ec.message());
    }

    const std::filesystem::path& root() const { return root_; }

    std::optional<CacheEntry> get(const CacheKey& key) const {
        const auto path = entry_path(key);
        std::ifstream in(path);
        if (!in) {
            if (!std::filesystem::exists(path)) return std::nullopt;
            // The entry appeared between our failed open and the exists()
            // check (a concurrent put's rename landing). The rename is
            // atomic, so a second open sees the complete file; if it still
            // fails the entry is genuinely unreadable.
            in.open(path);
            if (!in) throw IoError("cannot read cache entry: " + path.string());
        }
        nlohmann::json doc;
        try {
            in >> doc;
            CacheEntry entry;
            entry.key.digest = doc.at("key").get<std::string>();
            entry.response_text = doc.at("response_text").get<std::string>();
            entry.model_id = doc.at("model_id").get<std::string>();
            entry.created_at = doc.at("created_at").get<std::string>();
            entry.request_summary = doc.at("request_summary").get<std::string>();
            return entry;
        } catch (const nlohmann::json::exception& e) {
            throw IoError("corrupt cache entry " + path.string() + ": " + e.what());
        }
    }

    void put(const CacheEntry& entry) const {
        if (entry.response_text.empty())
            throw Error("refusing to cache empty response for key " + entry.key.digest);
        const nlohmann::json doc{{"key", entry.key.digest},
                                 {"response_text", entry.response_text},
                                 {"model_id", entry.model_id},
                                 {"created_at", entry.created_at},
                                 {"request_summary", entry.request_summary}};

        static std::atomic<uint64_t> temp_counter{0};
        const auto final_path = entry_path(entry.key);
        const auto temp_path =
            root_ / (entry.key.digest + ".tmp." + std::to_string(::getpid()) + "." +
                     std::to_string(temp_counter.fetch_add(1)));
        {
            std::ofstream out(temp_path);
            if (!out) throw IoError("cannot write cache entry: " + temp_path.string());
            out << doc.dump(2) << "\n";
            if (!out) throw IoError("short write on cache entry: " + temp_path.string());
        }
        std::error_code ec;
        std::filesystem::rename(temp_path, final_path, ec);
        if (ec) {
            std::filesystem::remove(temp_path);
            throw IoError("cannot commit cache entry " + final_path.string() + ": " +
                          ec.message());
        }
    }

    size_t entry_count() const {
        size_t count = 0;
        if (!std::filesystem::exists(root_)) return 0;
        for (const auto& item : std::filesystem::directory_iterator(root_))
            if (item.path().extension() == ".json") ++count;
        return count;
    }

    uintmax_t total_bytes() const {
        uintmax_t bytes = 0;
        if (!std::filesystem::exists(root_)) return 0;
        for (const auto& item : std::filesystem::directory_iterator(root_))
            if (item.path().extension() == ".json") bytes += item.file_size();
        return bytes;
    }

    size_t clear() const {
        size_t removed = 0;
        if (!std::filesystem::exists(root_)) return 0;
        for (const auto& item : std::filesystem::directory_iterator(root_)) {
            if (item.path().extension() == ".json") {
                std::filesystem::remove(item.path());
                ++removed;
            }
        }
        return removed;
    }

private:
    std::filesystem::path entry_path(const CacheKey& key) const {
        return root_ / (key.digest + ".json");
    }

    std::filesystem::path root_;
};

}  // namespace maturity
