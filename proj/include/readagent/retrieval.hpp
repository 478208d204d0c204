#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "readagent/backend.hpp"
#include "readagent/corpus.hpp"
#include "readagent/gisting.hpp"
#include "readagent/pagination.hpp"

namespace readagent {

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

namespace detail {

/// Lowercased whitespace tokens; no stemming, no stop words.
inline std::vector<std::string> bm25_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : text) {
        if (std::isspace(c) != 0) {
            if (!current.empty()) {
                tokens.push_back(current);
                current.clear();
            }
        } else {
            current.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

}  // namespace detail

/// Okapi BM25 with the +1-inside-log idf, which stays non-negative on the
/// tiny per-document corpora used here:
///   score(q,d) = sum_t idf(t) * f(t,d)(k1+1) / (f(t,d) + k1(1-b+b|d|/avgdl))
///   idf(t)     = ln((N - n_t + 0.5)/(n_t + 0.5) + 1)
inline std::vector<double> bm25_scores(std::string_view query, const std::vector<Page>& pages,
                                       const Bm25Params& params = {}) {
    const std::size_t n = pages.size();
    std::vector<double> scores(n, 0.0);
    std::vector<std::string> query_tokens = detail::bm25_tokens(query);
    if (query_tokens.empty() || n == 0) return scores;

    std::vector<std::unordered_map<std::string, int>> term_freq(n);
    std::vector<double> doc_len(n, 0.0);
    double total_len = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& token : detail::bm25_tokens(pages[i].text)) ++term_freq[i][token];
        for (const auto& [_, f] : term_freq[i]) doc_len[i] += f;
        total_len += doc_len[i];
    }
    const double avgdl = total_len / static_cast<double>(n);

    for (const auto& term : query_tokens) {
        int n_t = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (term_freq[i].count(term) != 0) ++n_t;
        }
        const double idf = std::log((static_cast<double>(n) - n_t + 0.5) / (n_t + 0.5) + 1.0);
        for (std::size_t i = 0; i < n; ++i) {
            auto it = term_freq[i].find(term);
            if (it == term_freq[i].end()) continue;
            const double f = it->second;
            const double denom =
                f + params.k1 * (1.0 - params.b + params.b * doc_len[i] / avgdl);
            scores[i] += idf * f * (params.k1 + 1.0) / denom;
        }
    }
    return scores;
}

/// Fixed-dimension text embedding. Inputs longer than max_chars are
/// truncated before embedding.
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::vector<double> embed(std::string_view text) = 0;
    virtual int max_chars() const = 0;
};

inline std::vector<double> embed_truncated(Embedder& embedder, std::string_view text) {
    const auto limit = static_cast<std::size_t>(embedder.max_chars());
    if (text.size() > limit) text = text.substr(0, limit);
    return embedder.embed(text);
}

/// Deterministic token-hash projection; the offline stand-in for a live
/// embedding model.
class HashEmbedder : public Embedder {
public:
    explicit HashEmbedder(int dim = 64, int max_chars = 10000)
        : dim_(dim), max_chars_(max_chars) {}

    std::vector<double> embed(std::string_view text) override {
        std::vector<double> vec(dim_, 0.0);
        for (const auto& token : detail::bm25_tokens(text)) {
            std::uint64_t h = detail::fnv1a64(token);
            double sign = ((h >> 32) & 1) ? 1.0 : -1.0;
            vec[h % dim_] += sign;
        }
        double norm = std::sqrt(std::inner_product(vec.begin(), vec.end(), vec.begin(), 0.0));
        if (norm > 0.0) {
            for (double& v : vec) v /= norm;
        }
        return vec;
    }

    int max_chars() const override { return max_chars_; }

private:
    int dim_;
    int max_chars_;
};

struct HttpEmbedderConfig {
    std::string base_url;
    std::string model;
    std::string api_key;
    std::string embeddings_path = "/v1/embeddings";
    int max_chars = 10000;
    RetryPolicy retry;
};

/// Embeddings-endpoint adapter, same retry behavior as the LLM backend.
class HttpEmbedder : public Embedder {
public:
    explicit HttpEmbedder(HttpEmbedderConfig config) : HttpEmbedder(std::move(config), nullptr) {}

    HttpEmbedder(HttpEmbedderConfig config, TransportFn transport)
        : config_(std::move(config)), transport_(std::move(transport)) {
        if (!transport_) {
            transport_ = [this](const std::string& path, const std::string& body) {
                return detail::http_post_json(config_.base_url, path, body, config_.api_key);
            };
        }
    }

    std::vector<double> embed(std::string_view text) override {
        Json body = {{"model", config_.model}, {"input", std::string(text)}};
        const std::string payload = body.dump();
        auto backoff = config_.retry.initial_backoff;
        std::string last_error;
        for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
            TransportReply reply = transport_(config_.embeddings_path, payload);
            if (reply.status == 200) {
                try {
                    Json parsed = Json::parse(reply.body);
                    return parsed.at("data").at(0).at("embedding").get<std::vector<double>>();
                } catch (const Json::exception& e) {
                    throw BackendError(std::string("malformed embedding response: ") + e.what());
                }
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
        throw BackendError("embedding failed after retries: " + last_error);
    }

    int max_chars() const override { return config_.max_chars; }

private:
    HttpEmbedderConfig config_;
    TransportFn transport_;
};

enum class RetrievalMethod { bm25, neural };
enum class EmbedTarget { pages, gists };

struct RetrieveResult {
    std::vector<int> page_indices;  // descending score, ties by ascending index
    bool k_exceeds_pages = false;
};

/// Top-k page indices by relevance. Neural scoring can target gists but
/// always returns raw page indices; BM25 always scores pages.
inline RetrieveResult retrieve(std::string_view query, const GistMemory& memory,
                               RetrievalMethod method, int k,
                               EmbedTarget embed_target = EmbedTarget::pages,
                               Embedder* embedder = nullptr, const Bm25Params& params = {}) {
    if (k < 1) throw std::invalid_argument("retrieve: k must be >= 1");
    const std::size_t n = memory.pages.size();
    RetrieveResult result;
    if (n == 0) return result;

    std::vector<double> scores;
    if (method == RetrievalMethod::bm25) {
        scores = bm25_scores(query, memory.pages, params);
    } else {
        if (!embedder) throw std::invalid_argument("retrieve: neural method needs an embedder");
        std::vector<double> query_vec = embed_truncated(*embedder, query);
        scores.resize(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::string& target = embed_target == EmbedTarget::gists
                                            ? memory.gists[i].text
                                            : memory.pages[i].text;
            std::vector<double> vec = embed_truncated(*embedder, target);
            scores[i] = std::inner_product(query_vec.begin(), query_vec.end(), vec.begin(), 0.0);
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return memory.pages[a].index < memory.pages[b].index;
    });

    if (static_cast<std::size_t>(k) > n) {
        result.k_exceeds_pages = true;
        k = static_cast<int>(n);
    }
    for (int i = 0; i < k; ++i) result.page_indices.push_back(memory.pages[order[i]].index);
    return result;
}

enum class TruncateAnchor { first, last };

/// First or last n_words whole words of the document text, never
/// splitting a word. Short documents come back whole.
inline std::string truncate_context(const Document& doc, int n_words, TruncateAnchor anchor) {
    if (n_words <= 0) throw std::invalid_argument("truncate_context: n_words must be > 0");
    const std::string text = doc.full_text();
    std::vector<std::pair<std::size_t, std::size_t>> spans;  // [begin, end) per word
    std::size_t i = 0;
    while (i < text.size()) {
        if (std::isspace(static_cast<unsigned char>(text[i])) != 0) {
            ++i;
            continue;
        }
        std::size_t begin = i;
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i])) == 0) ++i;
        spans.emplace_back(begin, i);
    }
    if (spans.size() <= static_cast<std::size_t>(n_words)) return text;
    if (anchor == TruncateAnchor::first) {
        return text.substr(0, spans[n_words - 1].second);
    }
    std::size_t begin = spans[spans.size() - n_words].first;
    return text.substr(begin);
}

}  // namespace readagent
