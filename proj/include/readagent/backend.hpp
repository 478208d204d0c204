#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "readagent/corpus.hpp"

namespace readagent {

struct BackendError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ScriptError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Ledger bucket for a completion call.
enum class Stage {
    pagination,
    gisting,
    merging,
    lookup_parallel,
    lookup_sequential,
    response,
    rater_strict,
    rater_permissive,
};

inline constexpr int kStageCount = 8;

inline const char* stage_name(Stage s) {
    switch (s) {
        case Stage::pagination: return "pagination";
        case Stage::gisting: return "gisting";
        case Stage::merging: return "merging";
        case Stage::lookup_parallel: return "lookup_parallel";
        case Stage::lookup_sequential: return "lookup_sequential";
        case Stage::response: return "response";
        case Stage::rater_strict: return "rater_strict";
        case Stage::rater_permissive: return "rater_permissive";
    }
    return "unknown";
}

inline std::optional<Stage> stage_from_name(std::string_view name) {
    for (int i = 0; i < kStageCount; ++i) {
        auto s = static_cast<Stage>(i);
        if (name == stage_name(s)) return s;
    }
    return std::nullopt;
}

struct CompletionRequest {
    std::string prompt;
    int max_output_words = 0;  // 0 = no hint
    double temperature = 0.0;
    Stage stage = Stage::response;
    // Document-text share of the prompt, for cost accounting. Template
    // boilerplate is prompt_words - payload_words.
    int payload_words = 0;
};

struct CompletionResult {
    std::string text;
    int prompt_words = 0;
    int response_words = 0;
};

/// The completion contract every pipeline stage depends on.
class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual CompletionResult complete(const CompletionRequest& request) = 0;
};

// ---------------------------------------------------------------------------
// Scripted backend (offline testing)
// ---------------------------------------------------------------------------

/// Deterministic backend answering from a script. Resolution order: exact
/// prompt match, first matching substring rule, per-stage response queue,
/// default. No match and no default is a test-configuration error.
class ScriptedBackend : public LlmBackend {
public:
    ScriptedBackend() = default;

    void add_exact(std::string prompt, std::string response) {
        std::lock_guard lock(mu_);
        exact_[std::move(prompt)] = std::move(response);
    }

    void add_contains(std::string needle, std::string response) {
        std::lock_guard lock(mu_);
        contains_.emplace_back(std::move(needle), std::move(response));
    }

    void push_sequence(Stage stage, std::string response) {
        std::lock_guard lock(mu_);
        sequences_[stage].push_back(std::move(response));
    }

    void set_default(std::string response) {
        std::lock_guard lock(mu_);
        default_ = std::move(response);
    }

    CompletionResult complete(const CompletionRequest& request) override {
        std::lock_guard lock(mu_);
        ++calls_;
        if (auto it = exact_.find(request.prompt); it != exact_.end()) {
            return make_result(request.prompt, it->second);
        }
        for (const auto& [needle, response] : contains_) {
            if (request.prompt.find(needle) != std::string::npos) {
                return make_result(request.prompt, response);
            }
        }
        if (auto it = sequences_.find(request.stage); it != sequences_.end() && !it->second.empty()) {
            std::string response = std::move(it->second.front());
            it->second.pop_front();
            return make_result(request.prompt, response);
        }
        if (default_) return make_result(request.prompt, *default_);
        throw ScriptError("scripted backend: no script entry matches prompt (stage " +
                          std::string(stage_name(request.stage)) + ") and no default is set");
    }

    long long calls() const {
        std::lock_guard lock(mu_);
        return calls_;
    }

    /// Script file schema: {"exact": {prompt: response}, "contains":
    /// [{"contains": needle, "response": r}], "sequence": {stage: [r, ...]},
    /// "default": r}. All keys optional.
    void load_json(const Json& spec) {
        if (spec.contains("exact")) {
            for (auto it = spec["exact"].begin(); it != spec["exact"].end(); ++it) {
                add_exact(it.key(), it.value().get<std::string>());
            }
        }
        if (spec.contains("contains")) {
            for (const auto& rule : spec["contains"]) {
                add_contains(rule.at("contains").get<std::string>(),
                             rule.at("response").get<std::string>());
            }
        }
        if (spec.contains("sequence")) {
            for (auto it = spec["sequence"].begin(); it != spec["sequence"].end(); ++it) {
                auto stage = stage_from_name(it.key());
                if (!stage) throw ScriptError("script file: unknown stage '" + it.key() + "'");
                for (const auto& response : it.value()) {
                    push_sequence(*stage, response.get<std::string>());
                }
            }
        }
        if (spec.contains("default")) set_default(spec["default"].get<std::string>());
    }

    static std::unique_ptr<ScriptedBackend> from_json(const Json& spec) {
        auto backend = std::make_unique<ScriptedBackend>();
        backend->load_json(spec);
        return backend;
    }

    static std::unique_ptr<ScriptedBackend> from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ScriptError("cannot open script file: " + path);
        Json spec;
        in >> spec;
        return from_json(spec);
    }

private:
    static CompletionResult make_result(const std::string& prompt, const std::string& response) {
        return CompletionResult{response, word_count(prompt), word_count(response)};
    }

    mutable std::mutex mu_;
    std::map<std::string, std::string> exact_;
    std::vector<std::pair<std::string, std::string>> contains_;
    std::map<Stage, std::deque<std::string>> sequences_;
    std::optional<std::string> default_;
    long long calls_ = 0;
};

// ---------------------------------------------------------------------------
// Live HTTP backend
// ---------------------------------------------------------------------------

struct RetryPolicy {
    int max_attempts = 5;
    std::chrono::milliseconds initial_backoff{1000};
    double backoff_multiplier = 2.0;
    // Injectable for tests.
    std::function<void(std::chrono::milliseconds)> sleeper =
        [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
};

struct TransportReply {
    int status = 0;  // 0 = transport failure
    std::string body;
    std::string error;
};

/// POSTs JSON to `path`; returns status + body. Lets tests inject faults.
using TransportFn = std::function<TransportReply(const std::string& path, const std::string& body)>;

struct HttpBackendConfig {
    std::string base_url;    // e.g. http://localhost:8080
    std::string model;
    std::string api_key;     // empty = no Authorization header
    std::string completions_path = "/v1/chat/completions";
    RetryPolicy retry;
    int max_concurrency = 8;
};

namespace detail {

/// Counting gate bounding concurrent in-flight requests.
class ConcurrencyGate {
public:
    explicit ConcurrencyGate(int limit) : limit_(limit < 1 ? 1 : limit) {}

    void acquire() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return active_ < limit_; });
        ++active_;
    }

    void release() {
        {
            std::lock_guard lock(mu_);
            --active_;
        }
        cv_.notify_one();
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    int limit_;
    int active_ = 0;
};

inline TransportReply http_post_json(const std::string& base_url, const std::string& path,
                                     const std::string& body, const std::string& api_key) {
    httplib::Client client(base_url);
    client.set_connection_timeout(30);
    client.set_read_timeout(300);
    httplib::Headers headers;
    if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) return TransportReply{0, "", httplib::to_string(res.error())};
    return TransportReply{res->status, res->body, ""};
}

inline bool retryable(const TransportReply& reply) {
    return reply.status == 0 || reply.status == 429 || reply.status >= 500;
}

}  // namespace detail

/// Chat/completions-style endpoint client. Transient transport and
/// rate-limit failures are retried with bounded exponential backoff.
class HttpBackend : public LlmBackend {
public:
    explicit HttpBackend(HttpBackendConfig config)
        : HttpBackend(std::move(config), nullptr) {}

    HttpBackend(HttpBackendConfig config, TransportFn transport)
        : config_(std::move(config)),
          transport_(std::move(transport)),
          gate_(config_.max_concurrency) {
        if (!transport_) {
            transport_ = [this](const std::string& path, const std::string& body) {
                return detail::http_post_json(config_.base_url, path, body, config_.api_key);
            };
        }
    }

    CompletionResult complete(const CompletionRequest& request) override {
        Json body = {
            {"model", config_.model},
            {"messages", Json::array({Json{{"role", "user"}, {"content", request.prompt}}})},
            {"temperature", request.temperature},
        };
        if (request.max_output_words > 0) {
            // ~0.75 words per token
            body["max_tokens"] = static_cast<int>(request.max_output_words / 0.75) + 1;
        }
        const std::string payload = body.dump();

        gate_.acquire();
        struct Release {
            detail::ConcurrencyGate& g;
            ~Release() { g.release(); }
        } release{gate_};

        auto backoff = config_.retry.initial_backoff;
        std::string last_error;
        for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
            TransportReply reply = transport_(config_.completions_path, payload);
            if (reply.status == 200) {
                return parse_completion(request, reply.body);
            }
            last_error = reply.status == 0
                             ? "transport: " + reply.error
                             : "HTTP " + std::to_string(reply.status) + ": " + reply.body;
            if (!detail::retryable(reply)) break;
            if (attempt < config_.retry.max_attempts) {
                config_.retry.sleeper(backoff);
                backoff = std::chrono::milliseconds(static_cast<long long>(
                    static_cast<double>(backoff.count()) * config_.retry.backoff_multiplier));
            }
        }
        throw BackendError("completion failed after retries: " + last_error);
    }

private:
    CompletionResult parse_completion(const CompletionRequest& request, const std::string& body) {
        Json parsed;
        try {
            parsed = Json::parse(body);
            std::string text = parsed.at("choices").at(0).at("message").at("content");
            return CompletionResult{text, word_count(request.prompt), word_count(text)};
        } catch (const Json::exception& e) {
            throw BackendError(std::string("malformed completion response: ") + e.what());
        }
    }

    HttpBackendConfig config_;
    TransportFn transport_;
    detail::ConcurrencyGate gate_;
};

}  // namespace readagent
