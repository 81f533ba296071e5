#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "mvr/corpus.hpp"
#include "mvr/index.hpp"

namespace mvr {

struct SearchParams {
    std::uint32_t kappa_c = 40;   // centroids retrieved per query token
    std::uint32_t kappa_d = 1000; // candidate cap after gathering
    float alpha = 0.4f;           // relative pruning threshold in (0, 1]
    std::uint32_t ef_search = 60; // graph beam width, 3/2 * kappa_c by default
    std::uint32_t k = 10;         // final results
    bool exhaustive_centroids = false;  // linear centroid scan instead of the graph
};

struct ScoredDoc {
    DocId doc = 0;
    float score = 0.0f;

    friend bool operator<(const ScoredDoc& a, const ScoredDoc& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc < b.doc;
    }
};

// Partial centroid-level scores: docs hit by at least one retrieved
// centroid, each with sum over query tokens of the best retrieved-centroid
// similarity for that token.
using CandidateSet = std::unordered_map<DocId, float>;

struct PhaseTimings {
    std::uint64_t gather_us = 0;
    std::uint64_t prune_us = 0;
    std::uint64_t refine_us = 0;
    std::uint64_t total_us = 0;
    std::uint64_t candidates_after_gather = 0;
    std::uint64_t candidates_after_prune = 0;
    std::uint64_t gather_dot_ops = 0;     // query-token x centroid similarities
    std::uint64_t refine_dot_ops = 0;     // query-token x doc-token centroid dots
    std::uint64_t table_lookup_ops = 0;   // micro-block reads during refine
};

struct SearchResult {
    std::vector<ScoredDoc> ranking;
    PhaseTimings timings;
};

// Gather phase: per query token, retrieve the top-kappa_c centroids, walk
// their posting lists, keep each document's best centroid similarity for
// the token, and sum contributions across tokens. Documents never touched
// are absent.
CandidateSet gather(const float* query, std::uint32_t n_q, const SearchIndex& index,
                    const SearchParams& params, GraphSearchScratch* scratch = nullptr,
                    std::uint64_t* dot_ops = nullptr);

// Sort by (partial score desc, doc id asc), keep the top kappa_d, then drop
// every doc with score < alpha * best score.
std::vector<ScoredDoc> truncate_and_prune(const CandidateSet& candidates,
                                          std::uint32_t kappa_d, float alpha);

// Refine phase: exact centroid inner products plus table-driven residual
// terms per document record, S = sum_i max_j. Top-k by (score desc, doc
// asc).
std::vector<ScoredDoc> refine(const float* query, std::uint32_t n_q,
                              const std::vector<ScoredDoc>& candidates,
                              const SearchIndex& index, std::uint32_t k,
                              std::uint64_t* dot_ops = nullptr,
                              std::uint64_t* lookup_ops = nullptr);

SearchResult search(const float* query, std::uint32_t n_q, const SearchIndex& index,
                    const SearchParams& params, GraphSearchScratch* scratch = nullptr);

// Exact MaxSim over the uncompressed corpus; the ground-truth oracle. When
// restrict_to is given, only those documents are scored (rerank mode).
std::vector<ScoredDoc> exhaustive_maxsim(const float* query, std::uint32_t n_q,
                                         const TokenVectorCorpus& corpus, std::size_t k,
                                         const std::vector<DocId>* restrict_to = nullptr);

}  // namespace mvr
