#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "guidemod/eval.hpp"
#include "guidemod/gateway.hpp"

namespace guidemod::stats {

/// Per-document strict-match counts for the same document under two runs
/// (baseline G and comparison M).
struct PairedDoc {
    std::string doc_id;
    eval::MatchCounts g;
    eval::MatchCounts m;
};

using PairedDocCounts = std::vector<PairedDoc>;

struct TestResult {
    double delta_observed = 0.0;  // pooled F1(M) - pooled F1(G)
    double p_bootstrap = 0.0;
    double p_randomization = 0.0;
    long bootstrap_iterations = 0;
    long randomization_iterations = 0;
    std::uint64_t seed = 0;
};

double pooled_f1(const PairedDocCounts& paired, bool m_side);

/// Paired document-level bootstrap for the one-sided hypothesis M > G:
/// B resamples with replacement, Delta* = pooled F1 difference of the
/// resample, p = (#{Delta* <= 0} + 1) / (B + 1). Deterministic given seed;
/// replicates run on fixed substreams so threading cannot change the count.
double bootstrap_p(const PairedDocCounts& paired, long b = 5000, std::uint64_t seed = 0);

/// Approximate randomization for M > G: R permutations each swapping the
/// two runs per document with probability 1/2,
/// p = (#{Delta_r >= Delta_obs} + 1) / (R + 1).
double randomization_p(const PairedDocCounts& paired, long r = 20000, std::uint64_t seed = 0);

TestResult run_significance(const PairedDocCounts& paired, long b = 5000, long r = 20000,
                            std::uint64_t seed = 0);

struct CostProjection {
    double c_proc = 0.0;       // i * c_i
    double t_proc = 0.0;       // i * t_i (minutes)
    double actual_cost = 0.0;  // summed over every recorded iteration
};

/// Projects the whole-process overhead from the final iteration's cost and
/// time. Throws std::invalid_argument when iteration i has no ledger
/// entries.
CostProjection project_cost(const gateway::CostLedger& ledger, int final_iteration);

}  // namespace guidemod::stats
