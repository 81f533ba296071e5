#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mvr/common.hpp"

namespace mvr {

// (score, id) with the ordering used everywhere a ranking is produced:
// higher score first, lower id on ties.
struct ScoredId {
    float score = 0.0f;
    std::uint32_t id = 0;

    friend bool operator<(const ScoredId& a, const ScoredId& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    }
};

// Layered proximity graph over unit vectors under inner-product similarity.
// Layer assignment follows the exponential rule with normalization
// 1/ln(M_graph); degree caps are M_graph above layer 0 and 2 * M_graph at
// layer 0. Built single-threaded in id order, so a fixed seed fixes the
// graph exactly.
struct CentroidGraph {
    std::uint32_t M_graph = 0;
    std::uint32_t ef_construction = 0;
    std::uint32_t dim = 0;
    std::uint32_t entry_point = 0;
    std::uint32_t max_level = 0;
    std::uint64_t seed = 0;
    std::vector<std::uint32_t> levels;                       // per node
    std::vector<std::vector<std::vector<std::uint32_t>>> adj;  // [node][layer]

    std::uint32_t num_nodes() const { return static_cast<std::uint32_t>(levels.size()); }
};

// Reusable visited-set storage so per-token searches do not reallocate.
// Also accumulates the similarity evaluations the traversal performs.
struct GraphSearchScratch {
    std::vector<std::uint32_t> mark;
    std::uint32_t epoch = 0;
    std::uint64_t dots = 0;
};

// Builds the graph over `count` unit rows. After construction every node is
// made reachable from the entry point at layer 0 (a repair pass re-links
// any stragglers within the degree caps).
CentroidGraph build_graph(const float* vectors, std::uint32_t count, std::uint32_t dim,
                          std::uint32_t M_graph, std::uint32_t ef_construction,
                          std::uint64_t seed);

// Top-k centroids for one query vector via graph traversal with beam width
// max(ef_search, k). Descending score, ties by lower id.
std::vector<ScoredId> search_centroids(const CentroidGraph& graph, const float* vectors,
                                       const float* query, std::uint32_t k,
                                       std::uint32_t ef_search,
                                       GraphSearchScratch* scratch = nullptr);

// Linear-scan oracle with the same ordering contract; agrees exactly with
// graph search when ef_search >= node count.
std::vector<ScoredId> exhaustive_centroids(const float* vectors, std::uint32_t count,
                                           std::uint32_t dim, const float* query,
                                           std::uint32_t k,
                                           std::uint64_t* dots = nullptr);

void save_graph(const CentroidGraph& graph, const std::filesystem::path& path);
CentroidGraph load_graph(const std::filesystem::path& path);

}  // namespace mvr
