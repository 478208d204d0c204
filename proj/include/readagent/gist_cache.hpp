#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <thread>

#include <json.hpp>

#include "readagent/corpus.hpp"
#include "readagent/gisting.hpp"

namespace readagent {

/// Versioned on-disk gist memories, keyed by (document content hash,
/// params fingerprint). Writes go through a temp file and an atomic
/// rename; concurrent writers of the same key last-write-win.
class GistCache {
public:
    static constexpr int kSchemaVersion = 1;

    explicit GistCache(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    std::filesystem::path entry_path(const std::string& doc_hash,
                                     const std::string& fingerprint) const {
        return dir_ / (doc_hash + "_" + fingerprint + ".json");
    }

    std::optional<GistMemory> load(const Document& doc, const std::string& fingerprint) const {
        const std::string doc_hash = document_content_hash(doc);
        auto path = entry_path(doc_hash, fingerprint);
        std::ifstream in(path);
        if (!in) return std::nullopt;
        Json rec;
        try {
            in >> rec;
        } catch (const Json::exception&) {
            return std::nullopt;  // truncated or foreign file; treat as a miss
        }
        if (rec.value("version", 0) != kSchemaVersion) return std::nullopt;
        if (rec.value("doc_hash", "") != doc_hash) return std::nullopt;
        if (rec.value("fingerprint", "") != fingerprint) return std::nullopt;

        GistMemory memory;
        memory.doc_id = doc.id;  // entries are keyed by content, not id
        memory.params_fingerprint = fingerprint;
        for (const auto& p : rec.at("pages")) {
            Page page;
            page.index = p.at("index").get<int>();
            page.begin_paragraph = p.at("begin").get<std::size_t>();
            page.end_paragraph = p.at("end").get<std::size_t>();
            page.text = p.at("text").get<std::string>();
            page.word_count = p.at("word_count").get<int>();
            memory.pages.push_back(std::move(page));
        }
        for (const auto& g : rec.at("gists")) {
            Gist gist;
            gist.page_index = g.at("page_index").get<int>();
            gist.text = g.at("text").get<std::string>();
            gist.word_count = g.at("word_count").get<int>();
            memory.gists.push_back(std::move(gist));
        }
        if (memory.gists.size() != memory.pages.size()) return std::nullopt;
        return memory;
    }

    void store(const Document& doc, const GistMemory& memory) const {
        const std::string doc_hash = document_content_hash(doc);
        Json pages = Json::array();
        for (const auto& p : memory.pages) {
            pages.push_back({{"index", p.index},
                             {"begin", p.begin_paragraph},
                             {"end", p.end_paragraph},
                             {"text", p.text},
                             {"word_count", p.word_count}});
        }
        Json gists = Json::array();
        for (const auto& g : memory.gists) {
            gists.push_back(
                {{"page_index", g.page_index}, {"text", g.text}, {"word_count", g.word_count}});
        }
        Json rec = {{"version", kSchemaVersion},
                    {"doc_id", memory.doc_id},
                    {"doc_hash", doc_hash},
                    {"fingerprint", memory.params_fingerprint},
                    {"pages", pages},
                    {"gists", gists}};

        auto final_path = entry_path(doc_hash, memory.params_fingerprint);
        auto tmp_path = final_path;
        tmp_path += ".tmp" + std::to_string(
                                 std::hash<std::thread::id>{}(std::this_thread::get_id()) & 0xffff);
        {
            std::ofstream out(tmp_path);
            out << rec.dump(2);
        }
        std::filesystem::rename(tmp_path, final_path);
    }

    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
};

}  // namespace readagent
