#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "readagent/backend.hpp"
#include "readagent/corpus.hpp"
#include "readagent/pagination.hpp"

namespace readagent {

struct LedgerError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct StageCost {
    long long calls = 0;
    long long prompt_words = 0;
    long long response_words = 0;
    long long payload_words = 0;  // document-text share of the prompts

    void add(const StageCost& other) {
        calls += other.calls;
        prompt_words += other.prompt_words;
        response_words += other.response_words;
        payload_words += other.payload_words;
    }
};

/// Per-stage word costs for one unit of work (a document build or one
/// question). Snapshots merge into the run ledger.
struct CostSnapshot {
    std::array<StageCost, kStageCount> stages{};

    StageCost& at(Stage s) { return stages[static_cast<int>(s)]; }
    const StageCost& at(Stage s) const { return stages[static_cast<int>(s)]; }

    void record(Stage s, long long prompt_words, long long response_words,
                long long payload_words) {
        auto& cost = at(s);
        cost.calls += 1;
        cost.prompt_words += prompt_words;
        cost.response_words += response_words;
        cost.payload_words += payload_words;
    }

    void merge(const CostSnapshot& other) {
        for (int i = 0; i < kStageCount; ++i) stages[i].add(other.stages[i]);
    }

    long long total_prompt_words() const {
        long long total = 0;
        for (const auto& s : stages) total += s.prompt_words;
        return total;
    }

    long long total_response_words() const {
        long long total = 0;
        for (const auto& s : stages) total += s.response_words;
        return total;
    }

    Json to_json() const {
        Json out = Json::object();
        for (int i = 0; i < kStageCount; ++i) {
            const auto& s = stages[i];
            if (s.calls == 0) continue;
            out[stage_name(static_cast<Stage>(i))] = {
                {"calls", s.calls},
                {"prompt_words", s.prompt_words},
                {"response_words", s.response_words},
                {"payload_words", s.payload_words},
            };
        }
        return out;
    }
};

/// Run-level accumulator. Stage totals always equal the sum of snapshots;
/// updates are serialized.
class CostLedger {
public:
    void add_snapshot(std::string label, const CostSnapshot& snapshot) {
        std::lock_guard lock(mu_);
        total_.merge(snapshot);
        snapshots_.emplace_back(std::move(label), snapshot);
    }

    CostSnapshot totals() const {
        std::lock_guard lock(mu_);
        return total_;
    }

    std::vector<std::pair<std::string, CostSnapshot>> snapshots() const {
        std::lock_guard lock(mu_);
        return snapshots_;
    }

    /// Snapshot order is fan-out order; serialize sorted by label so
    /// ledgers from identical runs are byte-identical.
    Json to_json() const {
        std::lock_guard lock(mu_);
        auto sorted = snapshots_;
        std::sort(sorted.begin(), sorted.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        Json snaps = Json::array();
        for (const auto& [label, snap] : sorted) {
            snaps.push_back({{"label", label}, {"stages", snap.to_json()}});
        }
        return Json{{"totals", total_.to_json()}, {"snapshots", snaps}};
    }

private:
    mutable std::mutex mu_;
    CostSnapshot total_;
    std::vector<std::pair<std::string, CostSnapshot>> snapshots_;
};

/// Forwards to the wrapped backend and records every call into a snapshot.
class RecordingBackend : public LlmBackend {
public:
    RecordingBackend(LlmBackend& inner, CostSnapshot& snapshot)
        : inner_(inner), snapshot_(snapshot) {}

    CompletionResult complete(const CompletionRequest& request) override {
        CompletionResult result = inner_.complete(request);
        std::lock_guard lock(mu_);
        snapshot_.record(request.stage, result.prompt_words, result.response_words,
                         request.payload_words);
        return result;
    }

private:
    LlmBackend& inner_;
    CostSnapshot& snapshot_;
    std::mutex mu_;
};

struct LedgerVerdict {
    bool ok = true;
    std::string detail;  // names the violated stage and bound when !ok
    long long pagination_payload_words = 0;
    long long pagination_bound = 0;
    long long gisting_payload_words = 0;
};

/// Checks one document build against the linear cost bounds: gisting is a
/// single pass of the raw input words, and pagination payload stays within
/// ceil(max_words / min_words) times the document length.
inline LedgerVerdict ledger_check(const CostSnapshot& build, const Document& doc,
                                  const PaginationParams& params) {
    LedgerVerdict verdict;
    const auto& pagination = build.at(Stage::pagination);
    const auto& gisting = build.at(Stage::gisting);

    long long ratio = (params.max_words + params.min_words - 1) / params.min_words;
    verdict.pagination_bound = ratio * doc.source_words;
    verdict.pagination_payload_words = pagination.payload_words;
    verdict.gisting_payload_words = gisting.payload_words;

    if (pagination.payload_words > verdict.pagination_bound) {
        verdict.ok = false;
        verdict.detail = "pagination payload " + std::to_string(pagination.payload_words) +
                         " exceeds bound " + std::to_string(verdict.pagination_bound);
        return verdict;
    }
    if (gisting.calls > 0 && gisting.payload_words != doc.source_words) {
        verdict.ok = false;
        verdict.detail = "gisting payload " + std::to_string(gisting.payload_words) +
                         " != document words " + std::to_string(doc.source_words);
        return verdict;
    }
    return verdict;
}

}  // namespace readagent
