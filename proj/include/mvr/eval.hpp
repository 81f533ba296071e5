#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mvr/corpus.hpp"

namespace mvr {

struct RunEntry {
    std::string doc_id;
    std::uint32_t rank = 0;  // 1-based
    float score = 0.0f;
};

// Ranked results per query, in execution order. TSV on disk:
// query_id <tab> doc_id <tab> rank <tab> score
struct Run {
    std::vector<std::pair<std::string, std::vector<RunEntry>>> queries;

    std::vector<RunEntry>& entries_for(const std::string& query_id);
    const std::vector<RunEntry>* find(const std::string& query_id) const;
};

void write_run(const Run& run, const std::filesystem::path& path);
Run read_run(const std::filesystem::path& path);

// Mean reciprocal rank of the first relevant document within the top k;
// queries with no relevant document retrieved contribute 0. Every run
// query must have judgments.
double mrr_at(const Run& run, const Qrels& qrels, std::uint32_t k);

// Fraction of queries with at least one relevant document in the top k.
double success_at(const Run& run, const Qrels& qrels, std::uint32_t k);

// Mean over queries of |top-k(run) intersect top-k(oracle)| / |top-k(oracle)|.
// Both runs must rank the same query set.
double recall_vs_oracle(const Run& run, const Run& oracle, std::uint32_t k);

}  // namespace mvr
