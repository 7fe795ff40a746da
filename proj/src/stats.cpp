#include "guidemod/stats.hpp"

#include <future>
#include <random>
#include <stdexcept>

namespace guidemod::stats {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

double f1_of_sums(long tp, long fp, long fn) {
    return eval::score_from_counts({tp, fp, fn}).f1;
}

double delta_for(const PairedDocCounts& paired, const std::vector<bool>& swapped) {
    long g_tp = 0, g_fp = 0, g_fn = 0, m_tp = 0, m_fp = 0, m_fn = 0;
    for (std::size_t i = 0; i < paired.size(); ++i) {
        const eval::MatchCounts& g = swapped[i] ? paired[i].m : paired[i].g;
        const eval::MatchCounts& m = swapped[i] ? paired[i].g : paired[i].m;
        g_tp += g.tp;
        g_fp += g.fp;
        g_fn += g.fn;
        m_tp += m.tp;
        m_fp += m.fp;
        m_fn += m.fn;
    }
    return f1_of_sums(m_tp, m_fp, m_fn) - f1_of_sums(g_tp, g_fp, g_fn);
}

void require_paired(const PairedDocCounts& paired) {
    if (paired.size() < 2) {
        throw std::invalid_argument("paired significance tests need at least 2 documents");
    }
}

// Fixed chunk grid independent of hardware so counts merge identically no
// matter how many workers run.
constexpr long kChunks = 16;

template <typename PerChunk>
long run_chunked(long total, std::uint64_t seed, PerChunk per_chunk) {
    std::vector<std::future<long>> futures;
    long assigned = 0;
    for (long chunk = 0; chunk < kChunks; ++chunk) {
        const long count = total / kChunks + (chunk < total % kChunks ? 1 : 0);
        if (count == 0) continue;
        const std::uint64_t chunk_seed = splitmix64(seed + static_cast<std::uint64_t>(chunk) + 1);
        futures.push_back(std::async(std::launch::async,
                                     [count, chunk_seed, per_chunk]() {
                                         return per_chunk(count, chunk_seed);
                                     }));
        assigned += count;
    }
    long hits = 0;
    for (auto& f : futures) hits += f.get();
    if (assigned != total) throw std::logic_error("chunking lost replicates");
    return hits;
}

}  // namespace

double pooled_f1(const PairedDocCounts& paired, bool m_side) {
    long tp = 0, fp = 0, fn = 0;
    for (const auto& d : paired) {
        const eval::MatchCounts& c = m_side ? d.m : d.g;
        tp += c.tp;
        fp += c.fp;
        fn += c.fn;
    }
    return f1_of_sums(tp, fp, fn);
}

double bootstrap_p(const PairedDocCounts& paired, long b, std::uint64_t seed) {
    require_paired(paired);
    const std::size_t n = paired.size();
    const long hits = run_chunked(b, seed, [&paired, n](long count, std::uint64_t chunk_seed) {
        std::mt19937_64 rng(chunk_seed);
        long non_positive = 0;
        for (long rep = 0; rep < count; ++rep) {
            long g_tp = 0, g_fp = 0, g_fn = 0, m_tp = 0, m_fp = 0, m_fn = 0;
            for (std::size_t k = 0; k < n; ++k) {
                const auto& d = paired[static_cast<std::size_t>(rng() % n)];
                g_tp += d.g.tp;
                g_fp += d.g.fp;
                g_fn += d.g.fn;
                m_tp += d.m.tp;
                m_fp += d.m.fp;
                m_fn += d.m.fn;
            }
            const double delta = f1_of_sums(m_tp, m_fp, m_fn) - f1_of_sums(g_tp, g_fp, g_fn);
            if (delta <= 0.0) ++non_positive;
        }
        return non_positive;
    });
    return static_cast<double>(hits + 1) / static_cast<double>(b + 1);
}

double randomization_p(const PairedDocCounts& paired, long r, std::uint64_t seed) {
    require_paired(paired);
    const std::size_t n = paired.size();
    const double delta_obs = delta_for(paired, std::vector<bool>(n, false));
    const long hits =
        run_chunked(r, seed, [&paired, n, delta_obs](long count, std::uint64_t chunk_seed) {
            std::mt19937_64 rng(chunk_seed);
            std::vector<bool> swapped(n);
            long at_least = 0;
            for (long rep = 0; rep < count; ++rep) {
                for (std::size_t k = 0; k < n; ++k) swapped[k] = (rng() & 1ULL) != 0;
                if (delta_for(paired, swapped) >= delta_obs) ++at_least;
            }
            return at_least;
        });
    return static_cast<double>(hits + 1) / static_cast<double>(r + 1);
}

TestResult run_significance(const PairedDocCounts& paired, long b, long r, std::uint64_t seed) {
    require_paired(paired);
    TestResult result;
    result.delta_observed = pooled_f1(paired, true) - pooled_f1(paired, false);
    result.p_bootstrap = bootstrap_p(paired, b, seed);
    result.p_randomization = randomization_p(paired, r, seed);
    result.bootstrap_iterations = b;
    result.randomization_iterations = r;
    result.seed = seed;
    return result;
}

CostProjection project_cost(const gateway::CostLedger& ledger, int final_iteration) {
    if (ledger.calls_of(final_iteration).empty()) {
        throw std::invalid_argument("ledger has no calls for iteration " +
                                    std::to_string(final_iteration));
    }
    CostProjection out;
    const double scale = static_cast<double>(final_iteration);
    out.c_proc = scale * ledger.cost_of(final_iteration);
    out.t_proc = scale * ledger.minutes_of(final_iteration);
    out.actual_cost = ledger.total_cost();
    return out;
}

}  // namespace guidemod::stats
