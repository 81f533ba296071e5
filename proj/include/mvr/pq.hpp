#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mvr/clustering.hpp"
#include "mvr/corpus.hpp"
#include "mvr/kmeans.hpp"

namespace mvr {

// Product quantizer over unit-normalized residuals: M subspaces of sub_dim
// components, 2^bits codewords each. Codewords are raw subspace means.
struct PQCodec {
    std::uint32_t M = 0;
    std::uint32_t bits = 0;
    std::uint32_t sub_dim = 0;
    std::vector<float> codebooks;  // M x ksub() x sub_dim, subspace-major

    std::uint32_t ksub() const { return 1u << bits; }
    std::uint32_t dim() const { return M * sub_dim; }
    const float* codeword(std::uint32_t m, std::uint32_t k) const {
        return codebooks.data() + (std::uint64_t(m) * ksub() + k) * sub_dim;
    }
};

// Search-time document store: per token the assigned centroid id, M code
// bytes and the residual norm, addressed through the document offset table.
// Serialized as one contiguous record per document (ids, then codes, then
// norms; see docs/compressed-corpus-format.md).
struct CompressedCorpus {
    std::uint32_t M = 0;
    std::vector<CentroidId> centroid_ids;    // per token
    std::vector<std::uint8_t> codes;         // per token, M bytes
    std::vector<float> residual_norms;       // per token
    std::vector<std::uint64_t> doc_offsets;  // D+1 token offsets

    std::uint64_t num_docs() const {
        return doc_offsets.empty() ? 0 : doc_offsets.size() - 1;
    }
    std::uint64_t num_tokens() const { return centroid_ids.size(); }
    std::uint32_t doc_len(DocId d) const {
        return static_cast<std::uint32_t>(doc_offsets[d + 1] - doc_offsets[d]);
    }
    const CentroidId* ids_of(DocId d) const {
        return centroid_ids.data() + doc_offsets[d];
    }
    const std::uint8_t* codes_of(DocId d) const {
        return codes.data() + doc_offsets[d] * M;
    }
    const float* norms_of(DocId d) const {
        return residual_norms.data() + doc_offsets[d];
    }
};

// Per-query lookup tables in the three-level layout: macro-block per
// subspace, centroid-block per codeword, micro-block of n_q contiguous
// entries. Entry (m, k, i) = <q_i restricted to subspace m, codeword(m,k)>
// at index (m * ksub + k) * n_q + i.
struct DistanceTables {
    std::uint32_t M = 0;
    std::uint32_t ksub = 0;
    std::uint32_t n_q = 0;
    std::vector<float> values;
};

// Reference layout grouped per query token: entry (i, m, k) at index
// (i * M + m) * ksub + k. Kept as the equivalence oracle for the
// three-level layout.
struct NaiveDistanceTables {
    std::uint32_t M = 0;
    std::uint32_t ksub = 0;
    std::uint32_t n_q = 0;
    std::vector<float> values;
};

// Per-subspace Lloyd on unit-normalized residual rows (zero residuals must
// already be excluded by the caller). Requires count >= 2^bits and
// dim divisible by M.
PQCodec train_pq(const float* residuals, std::uint64_t count, std::uint32_t dim,
                 std::uint32_t M, std::uint32_t bits, std::uint32_t iterations,
                 std::uint64_t seed);

// Quantizes every corpus vector's residual against its assigned centroid.
// Residuals are normalized by their stored norm before coding; zero-norm
// residuals get all-zero codes (their reconstruction is scaled by rho = 0).
CompressedCorpus encode(const TokenVectorCorpus& corpus, const Assignment& assignment,
                        const TokenPartitionedCodebook& codebook, const PQCodec& codec);

// Nearest-codeword reconstruction of one code row into out[dim()].
void decode(const PQCodec& codec, const std::uint8_t* code_row, float* out);

// Full token reconstruction t_hat = c + rho * decode(codes).
void reconstruct_token(const PQCodec& codec, const TokenPartitionedCodebook& codebook,
                       CentroidId cid, const std::uint8_t* code_row, float rho,
                       float* out);

DistanceTables build_distance_tables(const float* query, std::uint32_t n_q,
                                     const PQCodec& codec);
NaiveDistanceTables build_naive_tables(const float* query, std::uint32_t n_q,
                                       const PQCodec& codec);

// Approximate token scores for one document:
//   out(i, j) = centroid_scores(i, j) + rho_j * sum_m tables[m][code(j,m)][i]
// with out and centroid_scores n_q x n_d row-major. Accumulation is
// subspace-major in both implementations so their outputs are identical.
void score_tokens(const std::uint8_t* codes, const float* norms, std::uint32_t n_d,
                  const DistanceTables& tables, const float* centroid_scores, float* out);
void score_tokens_naive(const std::uint8_t* codes, const float* norms, std::uint32_t n_d,
                        const NaiveDistanceTables& tables, const float* centroid_scores,
                        float* out);

// Codec file: header (M, bits, sub_dim) + codebooks as raw f32.
void save_codec(const PQCodec& codec, const std::filesystem::path& path);
PQCodec load_codec(const std::filesystem::path& path);

// Compressed corpus file: offset table + per-document records.
void save_compressed(const CompressedCorpus& cc, const std::filesystem::path& path);
CompressedCorpus load_compressed(const std::filesystem::path& path);

}  // namespace mvr
