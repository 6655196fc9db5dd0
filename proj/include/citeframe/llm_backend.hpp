#pragma once

// Client for an OpenAI-compatible chat-completions endpoint with retries,
// a bound on in-flight requests, and an on-disk content-addressed cache.

#include "citeframe/error.hpp"

#include "httplib.h"
#include "json.hpp"

#include <openssl/evp.h>

#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>

namespace citeframe {

inline constexpr std::string_view api_key_env = "CITEFRAME_API_KEY";
inline constexpr std::string_view chat_completions_path = "/v1/chat/completions";

struct BackendConfig {
    /// scheme://host[:port][/prefix]; requests go to prefix + /v1/chat/completions
    std::string endpoint_url = "http://127.0.0.1:8000";
    std::string model_name;
    double temperature = 0.7;
    int max_tokens = 512;
    double request_timeout = 120.0;
    int max_retries = 3;
    int max_parallel = 4;
    std::string cache_dir = ".citeframe-cache";
    /// first retry delay; doubles on each further attempt
    int backoff_ms = 500;

    void validate() const {
        if (model_name.empty()) {
            throw ValidationError("backend config: model_name is required");
        }
        if (endpoint_url.empty()) {
            throw ValidationError("backend config: endpoint_url is required");
        }
        if (!(temperature >= 0.0)) {
            throw ValidationError("backend config: temperature must be >= 0");
        }
        if (max_tokens < 1) {
            throw ValidationError("backend config: max_tokens must be >= 1");
        }
        if (!(request_timeout > 0.0)) {
            throw ValidationError("backend config: request_timeout must be > 0");
        }
        if (max_retries < 0) {
            throw ValidationError("backend config: max_retries must be >= 0");
        }
        if (max_parallel < 1) {
            throw ValidationError("backend config: max_parallel must be >= 1");
        }
        if (backoff_ms < 0) {
            throw ValidationError("backend config: backoff_ms must be >= 0");
        }
        if (cache_dir.empty()) {
            throw ValidationError("backend config: cache_dir is required");
        }
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string{ s.substr(b, e - b + 1) };
}

template <typename T>
T parse_number(const std::string &path, std::size_t lineno, const std::string &key, const std::string &value) {
    std::istringstream in(value);
    in.imbue(std::locale::classic());
    T out{};
    in >> out;
    if (in.fail() || !in.eof()) {
        throw FormatError(path, lineno, "bad value for '" + key + "': '" + value + "'");
    }
    return out;
}

}  // namespace detail

/// Reads `key = value` lines (`#` starts a comment). Unknown keys are errors.
[[nodiscard]] inline BackendConfig load_backend_config(const std::string &path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError(path, 0, "cannot open backend config");
    }
    BackendConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        const auto stripped = detail::trim(line);
        if (stripped.empty()) {
            continue;
        }
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw FormatError(path, lineno, "expected 'key = value'");
        }
        const auto key = detail::trim(std::string_view(stripped).substr(0, eq));
        auto value = detail::trim(std::string_view(stripped).substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
            value = value.substr(1, value.size() - 2);
        }
        if (key == "endpoint_url") {
            cfg.endpoint_url = value;
        } else if (key == "model_name") {
            cfg.model_name = value;
        } else if (key == "temperature") {
            cfg.temperature = detail::parse_number<double>(path, lineno, key, value);
        } else if (key == "max_tokens") {
            cfg.max_tokens = detail::parse_number<int>(path, lineno, key, value);
        } else if (key == "request_timeout") {
            cfg.request_timeout = detail::parse_number<double>(path, lineno, key, value);
        } else if (key == "max_retries") {
            cfg.max_retries = detail::parse_number<int>(path, lineno, key, value);
        } else if (key == "max_parallel") {
            cfg.max_parallel = detail::parse_number<int>(path, lineno, key, value);
        } else if (key == "cache_dir") {
            cfg.cache_dir = value;
        } else if (key == "backoff_ms") {
            cfg.backoff_ms = detail::parse_number<int>(path, lineno, key, value);
        } else {
            throw FormatError(path, lineno, "unknown key '" + key + "'");
        }
    }
    try {
        cfg.validate();
    } catch (const ValidationError &e) {
        throw FormatError(path, 0, e.what());
    }
    return cfg;
}

/// Lowercase hex SHA-256.
[[nodiscard]] inline std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 digest failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

/// Cache key over (model, prompt, run_index, temperature). The tuple is
/// serialised as a JSON array so field boundaries cannot be confused.
[[nodiscard]] inline std::string prompt_hash(std::string_view model, std::string_view prompt, int run_index,
                                             double temperature) {
    const nlohmann::json key = nlohmann::json::array({ model, prompt, run_index, temperature });
    return sha256_hex(key.dump());
}

struct CompletionRecord {
    std::string prompt_hash;
    std::string raw_text;
    /// ISO-8601 UTC
    std::string created_at;
};

/// One JSON file per record under `dir`, named `<hash>.json`.
class ResponseCache {
  public:
    explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

    [[nodiscard]] std::filesystem::path path_for(const std::string &hash) const { return dir_ / (hash + ".json"); }

    [[nodiscard]] std::optional<CompletionRecord> get(const std::string &hash) const {
        std::lock_guard lock(stripe(hash));
        std::ifstream in(path_for(hash));
        if (!in) {
            return std::nullopt;
        }
        try {
            const auto j = nlohmann::json::parse(in);
            CompletionRecord rec;
            rec.prompt_hash = j.at("prompt_hash").get<std::string>();
            rec.raw_text = j.at("raw_text").get<std::string>();
            rec.created_at = j.value("created_at", std::string{});
            if (rec.prompt_hash != hash) {
                return std::nullopt;
            }
            return rec;
        } catch (const nlohmann::json::exception &) {
            // unreadable entries are treated as misses and rewritten
            return std::nullopt;
        }
    }

    void put(const CompletionRecord &rec) const {
        std::lock_guard lock(stripe(rec.prompt_hash));
        const auto final_path = path_for(rec.prompt_hash);
        auto tmp = final_path;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) {
                throw Error("cannot write cache file " + tmp.string());
            }
            const nlohmann::json j{ { "prompt_hash", rec.prompt_hash },
                                    { "raw_text", rec.raw_text },
                                    { "created_at", rec.created_at } };
            out << j.dump() << '\n';
        }
        std::filesystem::rename(tmp, final_path);
    }

    [[nodiscard]] const std::filesystem::path &dir() const noexcept { return dir_; }

  private:
    std::mutex &stripe(const std::string &hash) const {
        return locks_[std::hash<std::string>{}(hash) % locks_.size()];
    }

    std::filesystem::path dir_;
    mutable std::array<std::mutex, 32> locks_;
};

/// Result of one HTTP exchange. status 0 means the request never got a response.
struct HttpResult {
    int status = 0;
    std::string body;
    std::string error;
};

/// Seam between the client and the wire, so tests can substitute an endpoint.
class Transport {
  public:
    virtual ~Transport() = default;
    virtual HttpResult post_json(const std::string &body) = 0;
};

class HttpTransport final : public Transport {
  public:
    explicit HttpTransport(const BackendConfig &cfg) : timeout_(cfg.request_timeout) {
        auto url = cfg.endpoint_url;
        const auto scheme_end = url.find("://");
        if (scheme_end == std::string::npos) {
            throw ValidationError("endpoint_url must start with http:// or https://: '" + url + "'");
        }
        const auto path_start = url.find('/', scheme_end + 3);
        base_ = path_start == std::string::npos ? url : url.substr(0, path_start);
        auto prefix = path_start == std::string::npos ? std::string{} : url.substr(path_start);
        while (!prefix.empty() && prefix.back() == '/') {
            prefix.pop_back();
        }
        // accept a full endpoint as well as a base URL
        if (prefix.size() >= chat_completions_path.size() &&
            prefix.compare(prefix.size() - chat_completions_path.size(), std::string::npos, chat_completions_path) == 0) {
            path_ = prefix;
        } else if (prefix.size() >= 3 && prefix.compare(prefix.size() - 3, 3, "/v1") == 0) {
            path_ = prefix + "/chat/completions";
        } else {
            path_ = prefix + std::string{ chat_completions_path };
        }
        if (const char *key = std::getenv(std::string{ api_key_env }.c_str()); key != nullptr && *key != '\0') {
            api_key_ = key;
        }
    }

    HttpResult post_json(const std::string &body) override {
        httplib::Client client(base_);
        const auto secs = static_cast<time_t>(timeout_);
        const auto usecs = static_cast<time_t>((timeout_ - static_cast<double>(secs)) * 1e6);
        client.set_connection_timeout(secs, usecs);
        client.set_read_timeout(secs, usecs);
        client.set_write_timeout(secs, usecs);
        httplib::Headers headers;
        if (!api_key_.empty()) {
            headers.emplace("Authorization", "Bearer " + api_key_);
        }
        auto res = client.Post(path_, headers, body, "application/json");
        if (!res) {
            return { 0, {}, httplib::to_string(res.error()) };
        }
        return { res->status, res->body, {} };
    }

    [[nodiscard]] const std::string &path() const noexcept { return path_; }

  private:
    std::string base_;
    std::string path_;
    std::string api_key_;
    double timeout_;
};

/// Builds the request body: a single user message. run_index is sent as the
/// sampling seed so repeated runs are distinct yet reproducible on servers
/// that honour it.
[[nodiscard]] inline std::string chat_request_body(const BackendConfig &cfg, std::string_view prompt, int run_index) {
    nlohmann::json body;
    body["model"] = cfg.model_name;
    body["messages"] = nlohmann::json::array({ { { "role", "user" }, { "content", prompt } } });
    body["temperature"] = cfg.temperature;
    body["max_tokens"] = cfg.max_tokens;
    body["seed"] = run_index;
    return body.dump();
}

/// Extracts choices[0].message.content; throws BackendError when absent or empty.
[[nodiscard]] inline std::string parse_chat_response(const std::string &body) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception &e) {
        throw BackendError(std::string{ "completion response is not JSON: " } + e.what());
    }
    const auto choices = j.find("choices");
    if (choices == j.end() || !choices->is_array() || choices->empty()) {
        throw BackendError("completion response has no choices");
    }
    const auto &first = (*choices)[0];
    std::string text;
    if (first.contains("message") && first["message"].contains("content") && first["message"]["content"].is_string()) {
        text = first["message"]["content"].get<std::string>();
    } else if (first.contains("text") && first["text"].is_string()) {
        text = first["text"].get<std::string>();
    }
    if (text.empty()) {
        throw BackendError("empty completion body");
    }
    return text;
}

namespace detail {

inline std::string utc_now_iso8601() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream out;
    out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return out.str();
}

/// Counting gate limiting concurrent sections.
class Gate {
  public:
    explicit Gate(int slots) : free_(slots) {}

    void acquire() {
        std::unique_lock lock(m_);
        cv_.wait(lock, [this] { return free_ > 0; });
        --free_;
    }

    void release() {
        {
            std::lock_guard lock(m_);
            ++free_;
        }
        cv_.notify_one();
    }

  private:
    std::mutex m_;
    std::condition_variable cv_;
    int free_;
};

}  // namespace detail

/// Thread-safe completion client. At most `max_parallel` requests are on
/// the wire at any time, however many threads call `complete`.
class CompletionClient {
  public:
    explicit CompletionClient(BackendConfig cfg, std::shared_ptr<Transport> transport = nullptr)
        : cfg_((cfg.validate(), std::move(cfg))),
          transport_(transport ? std::move(transport) : std::make_shared<HttpTransport>(cfg_)),
          cache_(cfg_.cache_dir),
          gate_(cfg_.max_parallel) {}

    /// Cached text for (model, prompt, run_index, temperature) or a fresh
    /// completion. Transient failures (no response, 429, 5xx) are retried
    /// up to max_retries times with exponential backoff.
    [[nodiscard]] std::string complete(std::string_view prompt, int run_index) {
        if (prompt.empty()) {
            throw ValidationError("prompt must not be empty");
        }
        const auto hash = prompt_hash(cfg_.model_name, prompt, run_index, cfg_.temperature);
        if (auto hit = cache_.get(hash)) {
            cache_hits_.fetch_add(1);
            return std::move(hit->raw_text);
        }
        const auto body = chat_request_body(cfg_, prompt, run_index);
        std::string last_error;
        for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
            if (attempt > 0 && cfg_.backoff_ms > 0) {
                std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<std::int64_t>(cfg_.backoff_ms) << std::min(attempt - 1, 16)));
            }
            HttpResult res;
            gate_.acquire();
            try {
                network_requests_.fetch_add(1);
                res = transport_->post_json(body);
            } catch (...) {
                gate_.release();
                throw;
            }
            gate_.release();
            if (res.status == 0) {
                last_error = "request failed: " + res.error;
                continue;
            }
            if (res.status == 429 || res.status >= 500) {
                last_error = "HTTP " + std::to_string(res.status);
                continue;
            }
            if (res.status < 200 || res.status >= 300) {
                throw BackendError("HTTP " + std::to_string(res.status) + " from completion endpoint: " + res.body.substr(0, 200));
            }
            auto text = parse_chat_response(res.body);
            cache_.put({ hash, text, detail::utc_now_iso8601() });
            return text;
        }
        throw BackendError("completion failed after " + std::to_string(cfg_.max_retries + 1) + " attempts: " + last_error);
    }

    [[nodiscard]] const BackendConfig &config() const noexcept { return cfg_; }
    [[nodiscard]] const ResponseCache &cache() const noexcept { return cache_; }
    [[nodiscard]] std::size_t network_requests() const noexcept { return network_requests_.load(); }
    [[nodiscard]] std::size_t cache_hits() const noexcept { return cache_hits_.load(); }

  private:
    BackendConfig cfg_;
    std::shared_ptr<Transport> transport_;
    ResponseCache cache_;
    detail::Gate gate_;
    std::atomic<std::size_t> network_requests_{ 0 };
    std::atomic<std::size_t> cache_hits_{ 0 };
};

/// One-shot convenience over CompletionClient.
[[nodiscard]] inline std::string complete(const BackendConfig &cfg, std::string_view prompt, int run_index) {
    CompletionClient client(cfg);
    return client.complete(prompt, run_index);
}

}  // namespace citeframe
