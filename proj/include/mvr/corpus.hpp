#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mvr/common.hpp"

namespace mvr {

// Token-level embedding collection. One row per document token occurrence;
// document d owns rows [doc_offsets[d], doc_offsets[d+1]). Immutable after
// load and safe to share read-only across threads.
struct TokenVectorCorpus {
    std::uint32_t dim = 0;
    std::uint32_t vocab_size = 0;
    std::vector<float> vectors;           // row-major, num_vectors() x dim
    std::vector<TokenId> token_ids;       // one per row
    std::vector<std::uint64_t> doc_offsets;  // D+1 entries

    std::uint64_t num_vectors() const { return token_ids.size(); }
    std::uint64_t num_docs() const {
        return doc_offsets.empty() ? 0 : doc_offsets.size() - 1;
    }
    const float* row(std::uint64_t i) const { return vectors.data() + i * dim; }
    std::uint64_t doc_begin(DocId d) const { return doc_offsets[d]; }
    std::uint64_t doc_end(DocId d) const { return doc_offsets[d + 1]; }
    std::uint32_t doc_len(DocId d) const {
        return static_cast<std::uint32_t>(doc_end(d) - doc_begin(d));
    }
};

struct QuerySet {
    std::uint32_t dim = 0;
    std::vector<float> vectors;              // row-major, total tokens x dim
    std::vector<std::uint64_t> offsets;      // Q+1 entries
    std::vector<std::string> ids;            // one per query

    std::size_t num_queries() const { return ids.size(); }
    std::uint32_t query_len(std::size_t q) const {
        return static_cast<std::uint32_t>(offsets[q + 1] - offsets[q]);
    }
    const float* query_tokens(std::size_t q) const {
        return vectors.data() + offsets[q] * dim;
    }
};

// Relevance judgments keyed by query id. Doc ids referencing documents
// outside the corpus are kept but flagged, never silently dropped.
struct Qrels {
    std::map<std::string, std::map<std::string, int>> judgments;  // qid -> doc -> grade
    std::vector<std::pair<std::string, std::string>> unknown_docs;
};

// Structural + norm validation per the ingestion contract. When renormalize
// is set, rows are scaled to unit norm instead of rejected; rows further
// than norm_tol from unit norm without renormalization raise DataError.
void validate_corpus(TokenVectorCorpus& corpus, bool renormalize, float norm_tol = 1e-3f);
void validate_queries(QuerySet& queries, std::uint32_t max_query_len, bool renormalize,
                      float norm_tol = 1e-3f);

// Corpus container: a key:value metadata file referencing the vector payload
// (16-byte header + raw f32), token_ids (raw u32) and doc_offsets (raw u64).
TokenVectorCorpus load_corpus(const std::filesystem::path& meta_path,
                              bool renormalize = false);
void save_corpus(const TokenVectorCorpus& corpus, const std::filesystem::path& meta_path);

QuerySet load_queries(const std::filesystem::path& meta_path, bool renormalize = false,
                      std::uint32_t max_query_len = 32);
void save_queries(const QuerySet& queries, const std::filesystem::path& meta_path);

// Qrels TSV: query_id \t doc_id \t grade. Grades < 1 rejected.
Qrels load_qrels(const std::filesystem::path& path);
void save_qrels(const Qrels& qrels, const std::filesystem::path& path);
void flag_unknown_docs(Qrels& qrels, std::uint64_t num_docs);

std::vector<std::uint64_t> token_histogram(const TokenVectorCorpus& corpus);

// Share of vectors covered by the top_k most frequent tokens, for the
// stats report.
double top_share(const std::vector<std::uint64_t>& histogram, std::size_t top_k);

}  // namespace mvr
