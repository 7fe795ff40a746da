#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "guidemod/annotator.hpp"
#include "guidemod/eval.hpp"
#include "guidemod/gateway.hpp"
#include "guidemod/moderator.hpp"
#include "guidemod/stats.hpp"
#include "guidemod/types.hpp"

namespace guidemod::orchestrator {

enum class StopReason { none, threshold, no_gain, max_iterations };

const char* stop_reason_name(StopReason r);

struct Decision {
    bool stop = false;
    StopReason reason = StopReason::none;
    int accepted_iteration = 0;  // guideline version that stands after the decision
};

/// Applies the termination rules to the IAA history of iterations
/// 0..k (strict F1 over the dev set): threshold first (IAA_k >= tau), then
/// no-gain for k > 0 (IAA_k <= IAA_{k-1}, discarding the latest refinement
/// so iteration k-1 is accepted), then the max-iteration guard.
Decision decide_termination(const std::vector<double>& iaa_history, double tau,
                            int max_iterations);

struct PriceEntry {
    double price_in = 0.0;
    double price_out = 0.0;
    std::string currency = "USD";
};

/// CSV rows of (model_id, price_in, price_out, currency) with a header.
std::map<std::string, PriceEntry> load_price_table(const std::filesystem::path& path);

struct LoopConfig {
    std::filesystem::path dev_corpus;
    std::filesystem::path guideline;
    std::filesystem::path schema;
    std::filesystem::path annotation_template;
    std::filesystem::path pattern_template;
    std::filesystem::path principle_template;
    std::filesystem::path refinement_template;
    std::filesystem::path archive;

    gateway::ModelSpec model;
    double tau = 0.9;
    int max_iterations = 10;
    std::uint64_t tp_seed = 0;
    std::size_t tp_cap = 10;
    int parallelism = 1;
    std::int64_t context_window = 60;
    std::map<std::string, std::string> rename_whitelist;

    gateway::GatewayMode mode = gateway::GatewayMode::replay;
    std::filesystem::path fixture_store;
    std::string provider_kind = "http";  // "http" or "scripted"
    gateway::HttpProviderConfig http;
    std::filesystem::path script;  // scripted provider rules

    static LoopConfig load(const std::filesystem::path& path,
                           const std::optional<std::filesystem::path>& price_table_override = {});
};

struct IterationSummary {
    int k = 0;
    double iaa = 0.0;
    eval::MatchCounts pooled;
    double cost = 0.0;
    double minutes = 0.0;
    bool moderated = false;
};

struct RunSummary {
    std::string status;  // "completed" or "aborted"
    StopReason stop_reason = StopReason::none;
    std::optional<std::string> aborted_stage;
    int accepted_iteration = 0;
    int refinements_accepted = 0;  // reported iteration count
    std::vector<IterationSummary> iterations;
    std::filesystem::path archive;
};

/// One gateway per run: replay needs only the store; record and live build
/// the configured provider.
std::unique_ptr<gateway::CompletionGateway> make_gateway(const LoopConfig& config);

/// Drives annotate -> evaluate -> decide -> moderate, persisting each
/// iteration under archive/iter-NNN before the next one starts. Rerunning
/// over a terminal archive returns its summary without touching the
/// provider; a partial archive resumes after its last complete iteration.
/// A StageError during moderation marks the archive aborted-at-stage and
/// returns (prior iterations intact).
RunSummary run_loop(const LoopConfig& config);

/// Reads run.json of a finished archive.
RunSummary load_run_summary(const std::filesystem::path& archive);

/// Per-document paired counts for two run archives (their accepted
/// iterations), for the significance tests.
stats::PairedDocCounts paired_counts_from_archives(const std::filesystem::path& archive_g,
                                                   const std::filesystem::path& archive_m);

}  // namespace guidemod::orchestrator
