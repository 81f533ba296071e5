#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "mvr/clustering.hpp"
#include "mvr/hnsw.hpp"
#include "mvr/invlists.hpp"
#include "mvr/pq.hpp"

namespace mvr {

struct IndexBuildParams {
    std::uint32_t pq_m = 32;
    std::uint32_t pq_bits = 8;
    std::uint32_t pq_iterations = 10;
    std::uint64_t pq_train_cap = 1u << 20;  // residual sample rows for PQ training
    std::uint32_t graph_m = 32;
    std::uint32_t graph_ef_construction = 1500;
    std::uint64_t seed = 0;
};

// Everything search needs, loaded read-only: partitioned centroids, the
// residual codec, the per-document compressed records, the centroid graph
// and the per-centroid document lists.
struct SearchIndex {
    TokenPartitionedCodebook codebook;
    PQCodec codec;
    CompressedCorpus compressed;
    CentroidGraph graph;
    InvertedLists lists;
    IndexBuildParams params;
};

// Builds codec + compressed corpus + graph + inverted lists from a trained
// codebook/assignment pair and writes the index directory:
//   codebook.bin codec.bin compressed.bin graph.bin invlists.bin manifest.txt
// The manifest records a content hash per component; loading verifies all
// of them. On failure the partially written directory is removed.
void build_index_dir(const std::filesystem::path& dir, const TokenVectorCorpus& corpus,
                     const TokenPartitionedCodebook& codebook, const Assignment& assignment,
                     const IndexBuildParams& params);

SearchIndex load_index_dir(const std::filesystem::path& dir);

}  // namespace mvr
