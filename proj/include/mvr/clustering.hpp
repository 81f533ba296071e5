#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mvr/allocation.hpp"
#include "mvr/corpus.hpp"
#include "mvr/kmeans.hpp"

namespace mvr {

// Contiguous slice of centroid rows owned by one token; length 0 marks a
// token absent from the training corpus.
struct CentroidRange {
    std::uint64_t offset = 0;
    std::uint32_t length = 0;
};

// Global centroid matrix partitioned into per-token ranges. The global
// centroid id of a row is its row index, so ids are comparable across the
// whole index.
struct TokenPartitionedCodebook {
    std::uint32_t dim = 0;
    std::uint32_t vocab_size = 0;
    std::vector<float> centroids;       // num_centroids() x dim, unit rows
    std::vector<CentroidRange> ranges;  // one per vocabulary token

    std::uint64_t num_centroids() const { return dim ? centroids.size() / dim : 0; }
    const float* centroid(CentroidId c) const {
        return centroids.data() + std::uint64_t(c) * dim;
    }
};

struct Assignment {
    std::vector<CentroidId> centroid_ids;  // per corpus vector
    std::vector<float> residual_norms;     // rho_i = ||t_i - c_a(i)||_2

    std::uint64_t size() const { return centroid_ids.size(); }
};

// Lloyd with k-means++ seeding on one token's vectors; centroids are
// renormalized to unit L2 at the very end. Requires 1 <= k <= n.
std::vector<float> cluster_token(const float* vectors, std::uint64_t n, std::uint32_t dim,
                                 std::uint32_t k, std::uint32_t iterations,
                                 std::uint64_t seed, DistOpCounter* ops = nullptr);

// Runs cluster_token for every token in the plan, parallel across tokens
// with a shared work index. Token j trains on up to 256 * kappa_j sampled
// occurrences and uses a seed derived from (seed, token id), so the result
// is independent of thread_count. thread_count 0 means all cores.
TokenPartitionedCodebook train(const TokenVectorCorpus& corpus, const TokenIndex& index,
                               const std::vector<TokenStats>& stats,
                               const AllocationPlan& plan, std::uint32_t iterations,
                               std::uint64_t seed, std::uint32_t thread_count,
                               DistOpCounter* ops = nullptr);

// Nearest centroid within each vector's own token range (exhaustive over
// the kappa_j candidates), never cross-token. Residual norms are computed
// in the exact subtraction form. Parallel across tokens; output slots are
// disjoint so the result is independent of thread_count.
Assignment assign(const TokenVectorCorpus& corpus, const TokenIndex& index,
                  const TokenPartitionedCodebook& codebook, std::uint32_t thread_count,
                  DistOpCounter* ops = nullptr);

// Flat k-means over a uniform sample of the corpus (token ids ignored),
// same Lloyd kernel and counters as the token-aware path. Comparison
// baseline only; centroids are raw means, not renormalized.
std::vector<float> baseline_kmeans(const TokenVectorCorpus& corpus, std::uint32_t k,
                                   std::uint32_t iterations, std::uint64_t seed,
                                   std::uint64_t sample_cap = 10'000'000,
                                   DistOpCounter* ops = nullptr);

// Codebook file: header (centroid count, dim, vocab size) + centroid matrix
// as raw little-endian f32 + per-token (offset u64, length u32) table.
void save_codebook(const TokenPartitionedCodebook& cb, const std::filesystem::path& path);
TokenPartitionedCodebook load_codebook(const std::filesystem::path& path);

// Assignment file: vector count, then centroid ids (u32) and residual
// norms (f32) as contiguous arrays.
void save_assignment(const Assignment& a, const std::filesystem::path& path);
Assignment load_assignment(const std::filesystem::path& path);

}  // namespace mvr
