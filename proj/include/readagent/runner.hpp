#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "readagent/backend.hpp"
#include "readagent/corpus.hpp"
#include "readagent/eval.hpp"
#include "readagent/gist_cache.hpp"
#include "readagent/gisting.hpp"
#include "readagent/ledger.hpp"
#include "readagent/lookup.hpp"
#include "readagent/pagination.hpp"
#include "readagent/retrieval.hpp"

namespace readagent {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class PaginatorKind { llm, uniform };
enum class BackendKind { scripted, http };
enum class EmbedderKind { none, hash, http };
enum class CacheMode { use, bypass, rebuild };

struct MethodSpec {
    std::string name;  // full_raw, truncated, bm25, neural, gistmem, readagent_p, readagent_s
    int k = 1;
    EmbedTarget embed_target = EmbedTarget::pages;
    TruncateAnchor anchor = TruncateAnchor::first;
    int n_words = 6000;
    int max_pages = 1;

    std::string label() const {
        if (name == "truncated") {
            return "truncated_" + std::string(anchor == TruncateAnchor::first ? "first" : "last") +
                   "_" + std::to_string(n_words);
        }
        if (name == "bm25") return "bm25_top" + std::to_string(k);
        if (name == "neural") {
            return "neural_top" + std::to_string(k) + "_" +
                   (embed_target == EmbedTarget::gists ? "gists" : "pages");
        }
        if (name == "readagent_p") return "readagent_p_max" + std::to_string(max_pages);
        if (name == "readagent_s") return "readagent_s_max" + std::to_string(max_pages);
        return name;
    }

    static MethodSpec from_json(const Json& in) {
        MethodSpec spec;
        spec.name = in.at("name").get<std::string>();
        if (in.contains("k")) spec.k = in["k"].get<int>();
        if (in.contains("embed_target")) {
            std::string target = in["embed_target"].get<std::string>();
            if (target == "gists") {
                spec.embed_target = EmbedTarget::gists;
            } else if (target == "pages") {
                spec.embed_target = EmbedTarget::pages;
            } else {
                throw ConfigError("method embed_target must be 'pages' or 'gists'");
            }
        }
        if (in.contains("anchor")) {
            std::string anchor = in["anchor"].get<std::string>();
            if (anchor == "first") {
                spec.anchor = TruncateAnchor::first;
            } else if (anchor == "last") {
                spec.anchor = TruncateAnchor::last;
            } else {
                throw ConfigError("method anchor must be 'first' or 'last'");
            }
        }
        if (in.contains("n_words")) spec.n_words = in["n_words"].get<int>();
        if (in.contains("max_pages")) spec.max_pages = in["max_pages"].get<int>();
        return spec;
    }
};

/// Per-dataset pagination defaults.
inline std::optional<PaginationParams> pagination_preset(std::string_view name) {
    if (name == "quality" || name == "qmsum") return PaginationParams{280, 600, name == "qmsum"};
    if (name == "narrativeqa_gutenberg") return PaginationParams{500, 3000, false};
    if (name == "narrativeqa_movie") return PaginationParams{600, 1000, false};
    return std::nullopt;
}

struct RunConfig {
    std::string dataset_path;
    CorpusFormat format = CorpusFormat::generic_jsonl;

    BackendKind backend_kind = BackendKind::scripted;
    std::string script_path;
    std::string http_base_url;
    std::string http_model;
    std::string api_key_env = "READAGENT_API_KEY";
    std::map<Stage, double> temperatures;  // default 0 for every stage

    EmbedderKind embedder_kind = EmbedderKind::none;
    int hash_embedder_dim = 64;
    std::string embedder_base_url;
    std::string embedder_model;
    int embedder_max_chars = 10000;

    PaginatorKind paginator = PaginatorKind::llm;
    PaginationParams pagination;
    int uniform_target_words = 600;

    GistMode gist_mode = GistMode::unconditional;
    bool merge_enabled = false;
    long long merge_word_budget = 0;

    std::vector<MethodSpec> methods;
    long long context_word_budget = 6000;
    bool importance_ordering = false;
    bool take_deep_breath = false;
    std::string document_kind = "an article";

    int parallelism = 1;
    std::string output_dir = "out";
    unsigned seed = 0;
    int runs = 1;

    std::string cache_dir;  // empty disables the gist cache
    CacheMode cache_mode = CacheMode::use;
    bool dump_transcripts = false;

    void validate() const {
        if (dataset_path.empty()) throw ConfigError("dataset.path is required");
        if (methods.empty()) throw ConfigError("at least one method must be selected");
        if (parallelism < 1) throw ConfigError("parallelism must be >= 1");
        if (runs < 1) throw ConfigError("runs must be >= 1");
        if (pagination.min_words < 1 || pagination.min_words > pagination.max_words) {
            throw ConfigError("pagination requires 0 < min_words <= max_words");
        }
        if (uniform_target_words < 1) throw ConfigError("uniform_target_words must be >= 1");
        if (context_word_budget < 1) throw ConfigError("context_word_budget must be >= 1");
        if (gist_mode == GistMode::conditional) {
            throw ConfigError("bench runs gist unconditionally; conditional gisting is per-task "
                              "(see the ask subcommand)");
        }
        for (const auto& method : methods) {
            static const std::set<std::string> known = {
                "full_raw", "truncated", "bm25", "neural", "gistmem", "readagent_p", "readagent_s"};
            if (known.count(method.name) == 0) {
                throw ConfigError("unknown method '" + method.name + "'");
            }
            if ((method.name == "bm25" || method.name == "neural") && method.k < 1) {
                throw ConfigError("retrieval methods need k >= 1");
            }
            if (method.name == "neural" && embedder_kind == EmbedderKind::none) {
                throw ConfigError("neural retrieval needs an embedder");
            }
            if (method.name == "truncated" && method.n_words < 1) {
                throw ConfigError("truncated method needs n_words >= 1");
            }
            if ((method.name == "readagent_p" || method.name == "readagent_s") &&
                method.max_pages < 1) {
                throw ConfigError("readagent methods need max_pages >= 1");
            }
        }
        if (backend_kind == BackendKind::scripted && script_path.empty()) {
            throw ConfigError("scripted backend needs backend.script");
        }
        if (backend_kind == BackendKind::http && (http_base_url.empty() || http_model.empty())) {
            throw ConfigError("http backend needs backend.base_url and backend.model");
        }
    }

    static RunConfig from_json(const Json& in) {
        RunConfig cfg;
        if (in.contains("dataset")) {
            const Json& d = in["dataset"];
            cfg.dataset_path = d.value("path", std::string{});
            std::string format = d.value("format", "generic_jsonl");
            if (format == "generic_jsonl") {
                cfg.format = CorpusFormat::generic_jsonl;
            } else if (format == "quality_jsonl") {
                cfg.format = CorpusFormat::quality_jsonl;
            } else {
                throw ConfigError("dataset.format must be generic_jsonl or quality_jsonl");
            }
        }
        if (in.contains("backend")) {
            const Json& b = in["backend"];
            std::string kind = b.value("kind", "scripted");
            if (kind == "scripted") {
                cfg.backend_kind = BackendKind::scripted;
                cfg.script_path = b.value("script", std::string{});
            } else if (kind == "http") {
                cfg.backend_kind = BackendKind::http;
                cfg.http_base_url = b.value("base_url", std::string{});
                cfg.http_model = b.value("model", std::string{});
                cfg.api_key_env = b.value("api_key_env", cfg.api_key_env);
            } else {
                throw ConfigError("backend.kind must be scripted or http");
            }
            if (b.contains("temperatures")) {
                for (auto it = b["temperatures"].begin(); it != b["temperatures"].end(); ++it) {
                    auto stage = stage_from_name(it.key());
                    if (!stage) throw ConfigError("unknown stage '" + it.key() + "'");
                    cfg.temperatures[*stage] = it.value().get<double>();
                }
            }
        }
        if (in.contains("embedder")) {
            const Json& e = in["embedder"];
            std::string kind = e.value("kind", "hash");
            if (kind == "hash") {
                cfg.embedder_kind = EmbedderKind::hash;
                cfg.hash_embedder_dim = e.value("dim", 64);
            } else if (kind == "http") {
                cfg.embedder_kind = EmbedderKind::http;
                cfg.embedder_base_url = e.value("base_url", std::string{});
                cfg.embedder_model = e.value("model", std::string{});
                cfg.api_key_env = e.value("api_key_env", cfg.api_key_env);
            } else {
                throw ConfigError("embedder.kind must be hash or http");
            }
            cfg.embedder_max_chars = e.value("max_chars", 10000);
        }
        if (in.contains("pagination")) {
            const Json& p = in["pagination"];
            if (p.contains("preset")) {
                auto preset = pagination_preset(p["preset"].get<std::string>());
                if (!preset) throw ConfigError("unknown pagination preset");
                cfg.pagination = *preset;
            }
            std::string paginator = p.value("paginator", "llm");
            if (paginator == "llm") {
                cfg.paginator = PaginatorKind::llm;
            } else if (paginator == "uniform") {
                cfg.paginator = PaginatorKind::uniform;
            } else {
                throw ConfigError("pagination.paginator must be llm or uniform");
            }
            cfg.pagination.min_words = p.value("min_words", cfg.pagination.min_words);
            cfg.pagination.max_words = p.value("max_words", cfg.pagination.max_words);
            cfg.pagination.include_previous_page =
                p.value("include_previous_page", cfg.pagination.include_previous_page);
            cfg.uniform_target_words = p.value("uniform_target_words", cfg.uniform_target_words);
        }
        if (in.contains("gisting")) {
            std::string mode = in["gisting"].value("mode", "unconditional");
            if (mode == "unconditional") {
                cfg.gist_mode = GistMode::unconditional;
            } else if (mode == "conditional") {
                cfg.gist_mode = GistMode::conditional;
            } else {
                throw ConfigError("gisting.mode must be unconditional or conditional");
            }
        }
        if (in.contains("merge")) {
            cfg.merge_enabled = in["merge"].value("enabled", false);
            cfg.merge_word_budget = in["merge"].value("word_budget", 0LL);
        }
        if (in.contains("methods")) {
            for (const auto& m : in["methods"]) cfg.methods.push_back(MethodSpec::from_json(m));
        }
        cfg.context_word_budget = in.value("context_word_budget", cfg.context_word_budget);
        cfg.importance_ordering = in.value("importance_ordering", cfg.importance_ordering);
        cfg.take_deep_breath = in.value("take_deep_breath", cfg.take_deep_breath);
        cfg.document_kind = in.value("document_kind", cfg.document_kind);
        cfg.parallelism = in.value("parallelism", cfg.parallelism);
        cfg.output_dir = in.value("output_dir", cfg.output_dir);
        cfg.seed = in.value("seed", cfg.seed);
        cfg.runs = in.value("runs", cfg.runs);
        if (in.contains("cache")) {
            cfg.cache_dir = in["cache"].value("dir", std::string{});
            std::string mode = in["cache"].value("mode", "use");
            if (mode == "use") {
                cfg.cache_mode = CacheMode::use;
            } else if (mode == "bypass") {
                cfg.cache_mode = CacheMode::bypass;
            } else if (mode == "rebuild") {
                cfg.cache_mode = CacheMode::rebuild;
            } else {
                throw ConfigError("cache.mode must be use, bypass, or rebuild");
            }
        }
        cfg.dump_transcripts = in.value("transcripts", cfg.dump_transcripts);
        return cfg;
    }

    static RunConfig from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        Json parsed;
        try {
            in >> parsed;
        } catch (const Json::exception& e) {
            throw ConfigError(std::string("config parse error: ") + e.what());
        }
        return from_json(parsed);
    }
};

/// Rewrites request temperatures from the per-stage table.
class StageTemperatureBackend : public LlmBackend {
public:
    StageTemperatureBackend(LlmBackend& inner, std::map<Stage, double> overrides)
        : inner_(inner), overrides_(std::move(overrides)) {}

    CompletionResult complete(const CompletionRequest& request) override {
        auto it = overrides_.find(request.stage);
        if (it == overrides_.end()) return inner_.complete(request);
        CompletionRequest adjusted = request;
        adjusted.temperature = it->second;
        return inner_.complete(adjusted);
    }

private:
    LlmBackend& inner_;
    std::map<Stage, double> overrides_;
};

inline std::unique_ptr<LlmBackend> make_backend(const RunConfig& cfg) {
    if (cfg.backend_kind == BackendKind::scripted) {
        return ScriptedBackend::from_file(cfg.script_path);
    }
    HttpBackendConfig http;
    http.base_url = cfg.http_base_url;
    http.model = cfg.http_model;
    if (const char* key = std::getenv(cfg.api_key_env.c_str())) http.api_key = key;
    return std::make_unique<HttpBackend>(std::move(http));
}

inline std::unique_ptr<Embedder> make_embedder(const RunConfig& cfg) {
    switch (cfg.embedder_kind) {
        case EmbedderKind::none: return nullptr;
        case EmbedderKind::hash:
            return std::make_unique<HashEmbedder>(cfg.hash_embedder_dim, cfg.embedder_max_chars);
        case EmbedderKind::http: {
            HttpEmbedderConfig http;
            http.base_url = cfg.embedder_base_url;
            http.model = cfg.embedder_model;
            http.max_chars = cfg.embedder_max_chars;
            if (const char* key = std::getenv(cfg.api_key_env.c_str())) http.api_key = key;
            return std::make_unique<HttpEmbedder>(std::move(http));
        }
    }
    return nullptr;
}

struct MemoryBuild {
    GistMemory memory;
    CostSnapshot build_cost;
    bool from_cache = false;
    bool merge_over_budget = false;
};

/// Gets the gist memory for one document, from cache when allowed,
/// otherwise by paginating and gisting (and merging, when enabled).
inline MemoryBuild obtain_memory(const Document& doc, const RunConfig& cfg, LlmBackend& backend,
                                 const GistingOptions& gist_options, GistCache* cache,
                                 const PromptLibrary& prompts = default_prompts()) {
    const std::string paginator_kind =
        cfg.paginator == PaginatorKind::llm
            ? "llm"
            : "uniform:" + std::to_string(cfg.uniform_target_words);
    const std::string fingerprint =
        params_fingerprint(cfg.pagination, gist_options, paginator_kind, prompts);

    MemoryBuild build;
    if (cache && cfg.cache_mode == CacheMode::use) {
        if (auto cached = cache->load(doc, fingerprint)) {
            build.memory = std::move(*cached);
            build.from_cache = true;
            return build;
        }
    }

    RecordingBackend recording(backend, build.build_cost);
    std::vector<Page> pages = cfg.paginator == PaginatorKind::llm
                                  ? paginate_llm(doc, cfg.pagination, recording, prompts)
                                  : paginate_uniform(doc, cfg.uniform_target_words);
    build.memory =
        build_gist_memory(doc, std::move(pages), recording, gist_options, fingerprint, prompts);

    if (cfg.merge_enabled && cfg.merge_word_budget > 0) {
        MergeResult merged = merge_pages(build.memory.pages, build.memory.gists, recording,
                                         cfg.merge_word_budget, gist_options, prompts);
        build.memory.pages = std::move(merged.pages);
        build.memory.gists = std::move(merged.gists);
        build.merge_over_budget = merged.over_budget;
    }

    if (cache && cfg.cache_mode != CacheMode::bypass) cache->store(doc, build.memory);
    return build;
}

struct RunOutcome {
    std::vector<EvalRecord> records;
    std::vector<AggregateRow> rows;
    Json ledger_json;
    std::vector<Json> transcripts;
    bool hard_failure = false;
    std::vector<std::string> errors;
};

namespace detail {

template <typename Fn>
inline void parallel_for(std::size_t count, int workers, Fn&& fn) {
    if (workers <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;
    auto body = [&] {
        std::size_t i;
        while ((i = next.fetch_add(1)) < count) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mu);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> threads;
    std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(workers), count);
    threads.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(body);
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

/// Raw selected pages with their tags, in document order.
inline std::string retrieved_pages_context(const GistMemory& memory,
                                           const std::vector<int>& indices) {
    std::vector<int> ordered = indices;
    std::sort(ordered.begin(), ordered.end());
    std::string out;
    for (std::size_t i = 0; i < memory.pages.size(); ++i) {
        if (!std::binary_search(ordered.begin(), ordered.end(), memory.pages[i].index)) continue;
        if (!out.empty()) out += "\n\n";
        out += page_tag(memory.pages[i].index);
        out += "\n";
        out += memory.pages[i].text;
    }
    return out;
}

}  // namespace detail

/// Runs one (question, method) cell and scores it.
inline EvalRecord execute_method(const Document& doc, const GistMemory& memory, const QaTask& task,
                                 int question_index, const MethodSpec& method, int run_index,
                                 const RunConfig& cfg, LlmBackend& backend, Embedder* embedder,
                                 std::vector<std::pair<std::string, std::string>>* transcript,
                                 const PromptLibrary& prompts = default_prompts()) {
    EvalRecord record;
    record.doc_id = doc.id;
    record.question_index = question_index;
    record.method = method.label();
    record.run = run_index;

    RecordingBackend recording(backend, record.cost);

    std::string context;
    long long max_context_words = 0;
    if (method.name == "full_raw") {
        context = doc.full_text();
        max_context_words = word_count(context);
    } else if (method.name == "truncated") {
        context = truncate_context(doc, method.n_words, method.anchor);
        max_context_words = word_count(context);
    } else if (method.name == "bm25" || method.name == "neural") {
        RetrievalMethod rm =
            method.name == "bm25" ? RetrievalMethod::bm25 : RetrievalMethod::neural;
        RetrieveResult rr =
            retrieve(task.question, memory, rm, method.k, method.embed_target, embedder);
        context = detail::retrieved_pages_context(memory, rr.page_indices);
        max_context_words = word_count(context);
        record.lookup_count = static_cast<int>(rr.page_indices.size());
    } else {
        LookupConfig lookup_cfg;
        lookup_cfg.max_pages = method.max_pages;
        lookup_cfg.context_word_budget = cfg.context_word_budget;
        lookup_cfg.importance_ordering = cfg.importance_ordering;
        lookup_cfg.take_deep_breath = cfg.take_deep_breath;
        lookup_cfg.document_kind = cfg.document_kind;

        LookupResult lookup;
        if (method.name == "gistmem") {
            lookup_cfg.strategy = LookupStrategy::none;
            lookup = lookup_none(memory);
        } else if (method.name == "readagent_p") {
            lookup_cfg.strategy = LookupStrategy::parallel;
            lookup = lookup_parallel(memory, task, lookup_cfg, recording, prompts);
        } else {
            lookup_cfg.strategy = LookupStrategy::sequential;
            lookup = lookup_sequential(memory, task, lookup_cfg, recording, prompts);
        }
        context = std::move(lookup.final_context);
        max_context_words = lookup.max_context_words;
        record.lookup_count = static_cast<int>(lookup.selected_pages.size());
        record.truncated_by_budget = lookup.truncated_by_budget;
        if (transcript) {
            for (auto& turn : lookup.transcript) transcript->push_back(std::move(turn));
        }
    }

    AnswerMode mode = task.multiple_choice() ? AnswerMode::multiple_choice : AnswerMode::free_form;
    AnswerResult answered = answer(context, task, recording, mode, prompts, transcript);
    record.answer_text = answered.text;
    record.answer_option = answered.option;
    record.answer_unparsed = answered.unparsed;
    record.response_words = word_count(answered.text);
    record.final_context_words = word_count(context);
    record.max_context_words = max_context_words;
    record.compression = compression_rate(doc.source_words, max_context_words);

    if (task.multiple_choice() && task.gold_option) {
        record.correct = answered.option && *answered.option == *task.gold_option;
    }
    if (!task.multiple_choice() && !task.references.empty()) {
        record.rouge1 = rouge_n_best(answered.text, task.references, 1);
        record.rouge2 = rouge_n_best(answered.text, task.references, 2);
        record.rouge_lcs = rouge_l_best(answered.text, task.references);
        try {
            record.rating = rate(task.question, answered.text, task.references, recording, prompts);
        } catch (const BackendError&) {
            record.rating.level = RatingLevel::error;
        }
    }
    return record;
}

/// Full bench: build (or load) every gist memory, run every
/// (question, method, run) cell, aggregate, and keep the cost ledger.
inline RunOutcome run(const RunConfig& cfg, const PromptLibrary& prompts = default_prompts()) {
    cfg.validate();
    auto corpus = load_corpus(cfg.dataset_path, cfg.format);

    std::unique_ptr<LlmBackend> base_backend = make_backend(cfg);
    StageTemperatureBackend backend(*base_backend, cfg.temperatures);
    std::unique_ptr<Embedder> embedder = make_embedder(cfg);
    std::unique_ptr<GistCache> cache;
    if (!cfg.cache_dir.empty()) cache = std::make_unique<GistCache>(cfg.cache_dir);

    GistingOptions gist_options;  // bench is always unconditional
    CostLedger ledger;
    RunOutcome outcome;
    std::mutex outcome_mu;

    // Phase 1: one memory per document.
    std::vector<MemoryBuild> builds(corpus.size());
    detail::parallel_for(corpus.size(), cfg.parallelism, [&](std::size_t i) {
        try {
            builds[i] = obtain_memory(corpus[i].doc, cfg, backend, gist_options, cache.get(),
                                      prompts);
            LedgerVerdict verdict = ledger_check(builds[i].build_cost, corpus[i].doc,
                                                 cfg.pagination);
            ledger.add_snapshot("doc:" + corpus[i].doc.id + ":build", builds[i].build_cost);
            if (!verdict.ok) {
                std::lock_guard lock(outcome_mu);
                outcome.hard_failure = true;
                outcome.errors.push_back("ledger check failed for document '" + corpus[i].doc.id +
                                         "': " + verdict.detail);
            }
        } catch (const std::exception& e) {
            std::lock_guard lock(outcome_mu);
            outcome.hard_failure = true;
            outcome.errors.push_back("building memory for document '" + corpus[i].doc.id +
                                     "' failed: " + e.what());
        }
    });
    if (outcome.hard_failure) {
        outcome.ledger_json = ledger.to_json();
        outcome.ledger_json["seed"] = cfg.seed;
        return outcome;
    }

    // Phase 2: question cells fan out; methods run sequentially per cell.
    struct Cell {
        std::size_t doc_index;
        int question_index;
        int run_index;
    };
    std::vector<Cell> cells;
    for (int run_index = 0; run_index < cfg.runs; ++run_index) {
        for (std::size_t d = 0; d < corpus.size(); ++d) {
            for (std::size_t q = 0; q < corpus[d].tasks.size(); ++q) {
                cells.push_back({d, static_cast<int>(q), run_index});
            }
        }
    }

    detail::parallel_for(cells.size(), cfg.parallelism, [&](std::size_t i) {
        const Cell& cell = cells[i];
        const Document& doc = corpus[cell.doc_index].doc;
        const QaTask& task = corpus[cell.doc_index].tasks[cell.question_index];
        const GistMemory& memory = builds[cell.doc_index].memory;
        for (const auto& method : cfg.methods) {
            std::vector<std::pair<std::string, std::string>> transcript;
            auto* transcript_ptr = cfg.dump_transcripts ? &transcript : nullptr;
            try {
                EvalRecord record = execute_method(doc, memory, task, cell.question_index, method,
                                                   cell.run_index, cfg, backend, embedder.get(),
                                                   transcript_ptr, prompts);
                ledger.add_snapshot("doc:" + doc.id + ":q" + std::to_string(cell.question_index) +
                                        ":" + record.method + ":run" +
                                        std::to_string(cell.run_index),
                                    record.cost);
                std::lock_guard lock(outcome_mu);
                if (cfg.dump_transcripts) {
                    Json turns = Json::array();
                    for (const auto& [prompt, response] : transcript) {
                        turns.push_back({{"prompt", prompt}, {"response", response}});
                    }
                    outcome.transcripts.push_back({{"doc_id", doc.id},
                                                   {"question_index", cell.question_index},
                                                   {"method", record.method},
                                                   {"run", cell.run_index},
                                                   {"turns", std::move(turns)}});
                }
                outcome.records.push_back(std::move(record));
            } catch (const std::exception& e) {
                std::lock_guard lock(outcome_mu);
                outcome.hard_failure = true;
                outcome.errors.push_back("doc '" + doc.id + "' question " +
                                         std::to_string(cell.question_index) + " method '" +
                                         method.label() + "' failed: " + e.what());
            }
        }
    });

    // Deterministic order: config method order, then document, question, run.
    std::map<std::string, std::size_t> method_order;
    for (std::size_t i = 0; i < cfg.methods.size(); ++i) {
        method_order[cfg.methods[i].label()] = i;
    }
    std::sort(outcome.records.begin(), outcome.records.end(),
              [&](const EvalRecord& a, const EvalRecord& b) {
                  auto key = [&](const EvalRecord& r) {
                      return std::tuple(method_order.at(r.method), r.doc_id, r.question_index,
                                        r.run);
                  };
                  return key(a) < key(b);
              });
    std::sort(outcome.transcripts.begin(), outcome.transcripts.end(),
              [&](const Json& a, const Json& b) {
                  auto key = [&](const Json& t) {
                      return std::tuple(method_order.at(t.at("method").get<std::string>()),
                                        t.at("doc_id").get<std::string>(),
                                        t.at("question_index").get<int>(), t.at("run").get<int>());
                  };
                  return key(a) < key(b);
              });

    if (!outcome.records.empty()) outcome.rows = aggregate_by_method(outcome.records);
    outcome.ledger_json = ledger.to_json();
    outcome.ledger_json["seed"] = cfg.seed;
    return outcome;
}

/// records.jsonl, report.json, report.txt, ledger.json, transcripts.jsonl.
inline void write_outputs(const RunOutcome& outcome, const RunConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    const fs::path dir(cfg.output_dir);

    {
        std::ofstream records(dir / "records.jsonl");
        for (const auto& rec : outcome.records) records << rec.to_json().dump() << "\n";
    }
    {
        std::ofstream report(dir / "report.json");
        report << report_to_json(outcome.rows, outcome.hard_failure).dump(2) << "\n";
    }
    {
        std::ofstream table(dir / "report.txt");
        table << report_to_table(outcome.rows);
    }
    {
        std::ofstream ledger(dir / "ledger.json");
        ledger << outcome.ledger_json.dump(2) << "\n";
    }
    if (cfg.dump_transcripts) {
        std::ofstream transcripts(dir / "transcripts.jsonl");
        for (const auto& t : outcome.transcripts) transcripts << t.dump() << "\n";
    }
}

inline std::vector<EvalRecord> load_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open records file: " + path);
    std::vector<EvalRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        records.push_back(EvalRecord::from_json(Json::parse(line)));
    }
    return records;
}

inline Json pages_to_json(const std::vector<Page>& pages) {
    Json out = Json::array();
    for (const auto& page : pages) {
        out.push_back({{"index", page.index},
                       {"begin_paragraph", page.begin_paragraph},
                       {"end_paragraph", page.end_paragraph},
                       {"word_count", page.word_count},
                       {"text", page.text}});
    }
    return out;
}

}  // namespace readagent
