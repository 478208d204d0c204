#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "readagent/readagent.hpp"

namespace ra = readagent;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitHardFailure = 1;
constexpr int kExitUsage = 2;

struct CommonOptions {
    std::string config_path;
    std::optional<std::string> output_dir;
    std::optional<int> parallelism;
    std::optional<int> runs;
    std::optional<std::string> cache_mode;
    bool transcripts = false;
};

ra::RunConfig load_config(const CommonOptions& opts) {
    ra::RunConfig cfg = ra::RunConfig::from_file(opts.config_path);
    if (opts.output_dir) cfg.output_dir = *opts.output_dir;
    if (opts.parallelism) cfg.parallelism = *opts.parallelism;
    if (opts.runs) cfg.runs = *opts.runs;
    if (opts.cache_mode) {
        if (*opts.cache_mode == "use") {
            cfg.cache_mode = ra::CacheMode::use;
        } else if (*opts.cache_mode == "bypass") {
            cfg.cache_mode = ra::CacheMode::bypass;
        } else if (*opts.cache_mode == "rebuild") {
            cfg.cache_mode = ra::CacheMode::rebuild;
        } else {
            throw ra::ConfigError("--cache-mode must be use, bypass, or rebuild");
        }
    }
    if (opts.transcripts) cfg.dump_transcripts = true;
    return cfg;
}

const ra::LoadedDocument* find_document(const std::vector<ra::LoadedDocument>& corpus,
                                        const std::string& doc_id) {
    if (doc_id.empty()) return corpus.empty() ? nullptr : &corpus.front();
    for (const auto& loaded : corpus) {
        if (loaded.doc.id == doc_id) return &loaded;
    }
    return nullptr;
}

ra::MemoryBuild build_memory_for(const ra::Document& doc, const ra::RunConfig& cfg,
                                 ra::LlmBackend& backend, const ra::GistingOptions& gist_options) {
    std::unique_ptr<ra::GistCache> cache;
    if (!cfg.cache_dir.empty()) cache = std::make_unique<ra::GistCache>(cfg.cache_dir);
    return ra::obtain_memory(doc, cfg, backend, gist_options, cache.get());
}

int cmd_paginate(const CommonOptions& opts, const std::string& doc_id, bool check,
                 const std::string& out_path) {
    ra::RunConfig cfg = load_config(opts);
    auto corpus = ra::load_corpus(cfg.dataset_path, cfg.format);
    const auto* loaded = find_document(corpus, doc_id);
    if (!loaded) {
        std::cerr << "document not found: " << doc_id << "\n";
        return kExitUsage;
    }

    auto backend = ra::make_backend(cfg);
    std::vector<ra::Page> pages =
        cfg.paginator == ra::PaginatorKind::llm
            ? ra::paginate_llm(loaded->doc, cfg.pagination, *backend)
            : ra::paginate_uniform(loaded->doc, cfg.uniform_target_words);

    ra::Json out = {{"doc_id", loaded->doc.id},
                    {"source_words", loaded->doc.source_words},
                    {"pages", ra::pages_to_json(pages)}};
    if (check) {
        bool ok = ra::pages_tile_document(pages, loaded->doc);
        out["partition_ok"] = ok;
        if (!ok) {
            std::cerr << "partition check failed\n";
            std::cout << out.dump(2) << "\n";
            return kExitHardFailure;
        }
    }
    if (out_path.empty()) {
        std::cout << out.dump(2) << "\n";
    } else {
        std::ofstream file(out_path);
        file << out.dump(2) << "\n";
    }
    return kExitOk;
}

int cmd_gist(const CommonOptions& opts, const std::string& doc_id, const std::string& out_path) {
    ra::RunConfig cfg = load_config(opts);
    auto corpus = ra::load_corpus(cfg.dataset_path, cfg.format);
    const auto* loaded = find_document(corpus, doc_id);
    if (!loaded) {
        std::cerr << "document not found: " << doc_id << "\n";
        return kExitUsage;
    }

    auto backend = ra::make_backend(cfg);
    ra::GistingOptions gist_options;
    ra::MemoryBuild build = build_memory_for(loaded->doc, cfg, *backend, gist_options);

    ra::Json gists = ra::Json::array();
    for (const auto& gist : build.memory.gists) {
        gists.push_back({{"page_index", gist.page_index},
                         {"word_count", gist.word_count},
                         {"text", gist.text}});
    }
    std::string assembled = ra::assemble_memory(build.memory);
    ra::Json out = {{"doc_id", loaded->doc.id},
                    {"fingerprint", build.memory.params_fingerprint},
                    {"from_cache", build.from_cache},
                    {"pages", ra::pages_to_json(build.memory.pages)},
                    {"gists", gists},
                    {"memory_words", ra::word_count(assembled)},
                    {"memory", assembled}};
    if (out_path.empty()) {
        std::cout << out.dump(2) << "\n";
    } else {
        std::ofstream file(out_path);
        file << out.dump(2) << "\n";
    }
    return kExitOk;
}

int cmd_ask(const CommonOptions& opts, const std::string& doc_id, const std::string& question,
            const std::vector<std::string>& options, const std::string& strategy, int max_pages,
            bool conditional) {
    ra::RunConfig cfg = load_config(opts);
    auto corpus = ra::load_corpus(cfg.dataset_path, cfg.format);
    const auto* loaded = find_document(corpus, doc_id);
    if (!loaded) {
        std::cerr << "document not found: " << doc_id << "\n";
        return kExitUsage;
    }

    ra::QaTask task;
    task.question = question;
    if (!options.empty()) task.options = options;

    auto backend = ra::make_backend(cfg);
    ra::GistingOptions gist_options;
    if (conditional) {
        gist_options.mode = ra::GistMode::conditional;
        gist_options.task = question;
    }
    ra::MemoryBuild build = build_memory_for(loaded->doc, cfg, *backend, gist_options);

    ra::LookupConfig lookup_cfg;
    lookup_cfg.max_pages = max_pages;
    lookup_cfg.context_word_budget = cfg.context_word_budget;
    lookup_cfg.importance_ordering = cfg.importance_ordering;
    lookup_cfg.take_deep_breath = cfg.take_deep_breath;
    lookup_cfg.document_kind = cfg.document_kind;

    ra::LookupResult lookup;
    if (strategy == "parallel") {
        lookup_cfg.strategy = ra::LookupStrategy::parallel;
        lookup = ra::lookup_parallel(build.memory, task, lookup_cfg, *backend);
    } else if (strategy == "sequential") {
        lookup_cfg.strategy = ra::LookupStrategy::sequential;
        lookup = ra::lookup_sequential(build.memory, task, lookup_cfg, *backend);
    } else if (strategy == "none") {
        lookup = ra::lookup_none(build.memory);
    } else {
        std::cerr << "--strategy must be parallel, sequential, or none\n";
        return kExitUsage;
    }

    ra::AnswerMode mode =
        task.multiple_choice() ? ra::AnswerMode::multiple_choice : ra::AnswerMode::free_form;
    ra::AnswerResult answered = ra::answer(lookup.final_context, task, *backend, mode);

    double cr = ra::compression_rate(loaded->doc.source_words, lookup.max_context_words);
    std::cout << "document:            " << loaded->doc.id << "\n";
    std::cout << "final context words: " << lookup.final_context_words << "\n";
    std::cout << "compression rate:    " << cr << "%\n";
    std::cout << "selected pages:      " << ra::format_page_list(lookup.selected_pages) << "\n";
    if (answered.option) {
        std::cout << "answer option:       (" << static_cast<char>('A' + *answered.option)
                  << ")\n";
    } else if (task.multiple_choice()) {
        std::cout << "answer option:       unparsed\n";
    }
    std::cout << "answer: " << answered.text << "\n";
    return kExitOk;
}

int cmd_bench(const CommonOptions& opts) {
    ra::RunConfig cfg = load_config(opts);
    ra::RunOutcome outcome = ra::run(cfg);
    ra::write_outputs(outcome, cfg);
    std::cout << ra::report_to_table(outcome.rows);
    for (const auto& error : outcome.errors) std::cerr << "error: " << error << "\n";
    if (outcome.hard_failure) {
        std::cerr << "hard failure; partial report written to " << cfg.output_dir << "\n";
        return kExitHardFailure;
    }
    std::cout << "report written to " << cfg.output_dir << "\n";
    return kExitOk;
}

int cmd_report(const std::string& records_path, const std::string& output_dir) {
    std::vector<ra::EvalRecord> records = ra::load_records(records_path);
    if (records.empty()) {
        std::cerr << "no records in " << records_path << "\n";
        return kExitHardFailure;
    }
    std::vector<ra::AggregateRow> rows = ra::aggregate_by_method(records);
    std::cout << ra::report_to_table(rows);
    if (!output_dir.empty()) {
        std::filesystem::create_directories(output_dir);
        std::ofstream report(std::filesystem::path(output_dir) / "report.json");
        report << ra::report_to_json(rows, false).dump(2) << "\n";
        std::ofstream table(std::filesystem::path(output_dir) / "report.txt");
        table << ra::report_to_table(rows);
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ReadAgent: gist-memory reading pipeline and evaluation bench"};
    app.require_subcommand(1);

    CommonOptions common;
    auto add_common = [&common](CLI::App* cmd) {
        cmd->add_option("--config,-c", common.config_path, "run configuration file")->required();
        cmd->add_option("--output-dir,-o", common.output_dir, "override output directory");
        cmd->add_option("--parallelism,-j", common.parallelism, "override worker bound");
        cmd->add_option("--runs", common.runs, "override repeated-run count");
        cmd->add_option("--cache-mode", common.cache_mode, "use | bypass | rebuild");
        cmd->add_flag("--transcripts", common.transcripts, "dump look-up transcripts");
    };

    std::string doc_id;
    bool check = false;
    std::string out_path;
    auto* paginate = app.add_subcommand("paginate", "paginate one document and emit pages");
    add_common(paginate);
    paginate->add_option("--doc", doc_id, "document id (default: first)");
    paginate->add_flag("--check", check, "verify the partition property");
    paginate->add_option("--out", out_path, "write JSON here instead of stdout");

    auto* gist = app.add_subcommand("gist", "build and emit the gist memory for one document");
    add_common(gist);
    gist->add_option("--doc", doc_id, "document id (default: first)");
    gist->add_option("--out", out_path, "write JSON here instead of stdout");

    std::string question;
    std::vector<std::string> mc_options;
    std::string strategy = "parallel";
    int max_pages = 1;
    bool conditional = false;
    auto* ask = app.add_subcommand("ask", "answer one ad-hoc question over one document");
    add_common(ask);
    ask->add_option("--doc", doc_id, "document id (default: first)");
    ask->add_option("--question,-q", question, "the question")->required();
    ask->add_option("--option", mc_options, "multiple-choice option (repeatable)");
    ask->add_option("--strategy", strategy, "parallel | sequential | none");
    ask->add_option("--max-pages", max_pages, "look-up page budget");
    ask->add_flag("--conditional", conditional, "include the question in the gisting prompt");

    auto* bench = app.add_subcommand("bench", "run the full method matrix and emit reports");
    add_common(bench);

    std::string records_path;
    std::string report_out;
    auto* report = app.add_subcommand("report", "re-aggregate stored records");
    report->add_option("--records", records_path, "records.jsonl from a bench run")->required();
    report->add_option("--output-dir,-o", report_out, "also write report.json/report.txt here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (paginate->parsed()) return cmd_paginate(common, doc_id, check, out_path);
        if (gist->parsed()) return cmd_gist(common, doc_id, out_path);
        if (ask->parsed()) {
            return cmd_ask(common, doc_id, question, mc_options, strategy, max_pages, conditional);
        }
        if (bench->parsed()) return cmd_bench(common);
        if (report->parsed()) return cmd_report(records_path, report_out);
    } catch (const ra::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ra::CorpusError& e) {
        std::cerr << "corpus error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitHardFailure;
    }
    return kExitUsage;
}
