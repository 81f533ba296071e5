#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mvr/clustering.hpp"
#include "mvr/corpus.hpp"

namespace mvr {

// Per-centroid posting lists: strictly increasing, deduplicated document
// ids. Flat in memory; delta-encoded varints on disk.
struct InvertedLists {
    std::vector<std::uint64_t> offsets;  // num_centroids + 1
    std::vector<DocId> docs;             // concatenated postings

    std::uint64_t num_centroids() const {
        return offsets.empty() ? 0 : offsets.size() - 1;
    }
    std::uint64_t count(CentroidId c) const { return offsets[c + 1] - offsets[c]; }
    const DocId* list_of(CentroidId c) const { return docs.data() + offsets[c]; }
};

// d appears in list i iff at least one token of document d is assigned to
// centroid i; within-document repeats collapse to one posting.
InvertedLists build_inverted_lists(const Assignment& assignment,
                                   const TokenVectorCorpus& corpus,
                                   std::uint64_t num_centroids);

void save_inverted_lists(const InvertedLists& lists, const std::filesystem::path& path);
InvertedLists load_inverted_lists(const std::filesystem::path& path);

}  // namespace mvr
