#include "mvr/pq.hpp"

#include <cmath>
#include <cstring>

#include "mvr/io.hpp"

namespace mvr {

namespace {

constexpr char kCodecMagic[8] = {'M', 'V', 'R', 'P', 'Q', 'C', '0', '1'};
constexpr char kCompressedMagic[8] = {'M', 'V', 'R', 'C', 'P', 'S', '0', '1'};

void check_shape(std::uint32_t dim, std::uint32_t M, std::uint32_t bits) {
    if (M == 0 || dim == 0 || dim % M != 0) {
        throw UsageError("pq: dim " + std::to_string(dim) +
                         " is not divisible into M = " + std::to_string(M) + " subspaces");
    }
    if (bits == 0 || bits > 8) {
        throw UsageError("pq: bits per code must be in [1, 8]");
    }
}

}  // namespace

PQCodec train_pq(const float* residuals, std::uint64_t count, std::uint32_t dim,
                 std::uint32_t M, std::uint32_t bits, std::uint32_t iterations,
                 std::uint64_t seed) {
    check_shape(dim, M, bits);
    PQCodec codec;
    codec.M = M;
    codec.bits = bits;
    codec.sub_dim = dim / M;
    const std::uint32_t ksub = codec.ksub();
    if (count < ksub) {
        throw UsageError("train_pq: " + std::to_string(count) +
                         " training rows for " + std::to_string(ksub) + " codewords");
    }
    codec.codebooks.resize(std::uint64_t(M) * ksub * codec.sub_dim);

    std::vector<float> sub(count * codec.sub_dim);
    for (std::uint32_t m = 0; m < M; ++m) {
        for (std::uint64_t i = 0; i < count; ++i) {
            std::memcpy(sub.data() + i * codec.sub_dim,
                        residuals + i * dim + std::uint64_t(m) * codec.sub_dim,
                        codec.sub_dim * sizeof(float));
        }
        KmeansResult res = lloyd_kmeans(sub.data(), count, codec.sub_dim, ksub,
                                        iterations, token_seed(seed, m));
        std::memcpy(codec.codebooks.data() + std::uint64_t(m) * ksub * codec.sub_dim,
                    res.centroids.data(), res.centroids.size() * sizeof(float));
    }
    return codec;
}

CompressedCorpus encode(const TokenVectorCorpus& corpus, const Assignment& assignment,
                        const TokenPartitionedCodebook& codebook, const PQCodec& codec) {
    if (assignment.size() != corpus.num_vectors()) {
        throw SizeMismatchError("encode: assignment covers " +
                                std::to_string(assignment.size()) + " of " +
                                std::to_string(corpus.num_vectors()) + " vectors");
    }
    if (codec.dim() != corpus.dim) {
        throw SizeMismatchError("encode: codec dim " + std::to_string(codec.dim()) +
                                " does not match corpus dim " + std::to_string(corpus.dim));
    }
    const std::uint64_t n = corpus.num_vectors();
    const std::uint32_t dim = corpus.dim;
    const std::uint32_t ksub = codec.ksub();

    CompressedCorpus cc;
    cc.M = codec.M;
    cc.centroid_ids = assignment.centroid_ids;
    cc.residual_norms = assignment.residual_norms;
    cc.doc_offsets = corpus.doc_offsets;
    cc.codes.assign(n * codec.M, 0);

    constexpr std::uint64_t kChunk = 4096;
    std::vector<float> resid(kChunk * dim);
    std::vector<std::uint64_t> live(kChunk);
    std::vector<float> sub(kChunk * codec.sub_dim);
    std::vector<std::uint32_t> nearest(kChunk);

    for (std::uint64_t base = 0; base < n; base += kChunk) {
        const std::uint64_t cn = std::min(kChunk, n - base);
        std::uint64_t m_live = 0;
        for (std::uint64_t i = 0; i < cn; ++i) {
            const std::uint64_t row = base + i;
            const float rho = assignment.residual_norms[row];
            if (rho == 0.0f) continue;
            const float* t = corpus.row(row);
            const float* c = codebook.centroid(assignment.centroid_ids[row]);
            float* r = resid.data() + m_live * dim;
            for (std::uint32_t d = 0; d < dim; ++d) r[d] = (t[d] - c[d]) / rho;
            live[m_live++] = row;
        }
        if (m_live == 0) continue;
        for (std::uint32_t m = 0; m < codec.M; ++m) {
            for (std::uint64_t i = 0; i < m_live; ++i) {
                std::memcpy(sub.data() + i * codec.sub_dim,
                            resid.data() + i * dim + std::uint64_t(m) * codec.sub_dim,
                            codec.sub_dim * sizeof(float));
            }
            assign_nearest(sub.data(), m_live, codec.sub_dim, codec.codeword(m, 0), ksub,
                           nearest.data(), nullptr, nullptr);
            for (std::uint64_t i = 0; i < m_live; ++i) {
                cc.codes[live[i] * codec.M + m] = static_cast<std::uint8_t>(nearest[i]);
            }
        }
    }
    return cc;
}

void decode(const PQCodec& codec, const std::uint8_t* code_row, float* out) {
    for (std::uint32_t m = 0; m < codec.M; ++m) {
        std::memcpy(out + std::uint64_t(m) * codec.sub_dim, codec.codeword(m, code_row[m]),
                    codec.sub_dim * sizeof(float));
    }
}

void reconstruct_token(const PQCodec& codec, const TokenPartitionedCodebook& codebook,
                       CentroidId cid, const std::uint8_t* code_row, float rho,
                       float* out) {
    decode(codec, code_row, out);
    const float* c = codebook.centroid(cid);
    const std::uint32_t dim = codec.dim();
    for (std::uint32_t d = 0; d < dim; ++d) out[d] = c[d] + rho * out[d];
}

DistanceTables build_distance_tables(const float* query, std::uint32_t n_q,
                                     const PQCodec& codec) {
    DistanceTables t;
    t.M = codec.M;
    t.ksub = codec.ksub();
    t.n_q = n_q;
    t.values.resize(std::uint64_t(t.M) * t.ksub * n_q);
    for (std::uint32_t m = 0; m < t.M; ++m) {
        for (std::uint32_t k = 0; k < t.ksub; ++k) {
            float* micro = t.values.data() + (std::uint64_t(m) * t.ksub + k) * n_q;
            const float* cw = codec.codeword(m, k);
            for (std::uint32_t i = 0; i < n_q; ++i) {
                micro[i] = dot(query + std::uint64_t(i) * codec.dim() +
                                   std::uint64_t(m) * codec.sub_dim,
                               cw, codec.sub_dim);
            }
        }
    }
    return t;
}

NaiveDistanceTables build_naive_tables(const float* query, std::uint32_t n_q,
                                       const PQCodec& codec) {
    NaiveDistanceTables t;
    t.M = codec.M;
    t.ksub = codec.ksub();
    t.n_q = n_q;
    t.values.resize(std::uint64_t(t.M) * t.ksub * n_q);
    for (std::uint32_t i = 0; i < n_q; ++i) {
        for (std::uint32_t m = 0; m < t.M; ++m) {
            float* block = t.values.data() + (std::uint64_t(i) * t.M + m) * t.ksub;
            for (std::uint32_t k = 0; k < t.ksub; ++k) {
                block[k] = dot(query + std::uint64_t(i) * codec.dim() +
                                   std::uint64_t(m) * codec.sub_dim,
                               codec.codeword(m, k), codec.sub_dim);
            }
        }
    }
    return t;
}

void score_tokens(const std::uint8_t* codes, const float* norms, std::uint32_t n_d,
                  const DistanceTables& tables, const float* centroid_scores, float* out) {
    const std::uint32_t n_q = tables.n_q;
    float stack_acc[64];
    std::vector<float> heap_acc(n_q > 64 ? n_q : 0);
    float* acc = n_q > 64 ? heap_acc.data() : stack_acc;
    for (std::uint32_t j = 0; j < n_d; ++j) {
        std::fill(acc, acc + n_q, 0.0f);
        const std::uint8_t* row = codes + std::uint64_t(j) * tables.M;
        for (std::uint32_t m = 0; m < tables.M; ++m) {
            const std::uint32_t k = row[m];
            if (k >= tables.ksub) {
                throw CorruptRecordError("score_tokens: code " + std::to_string(k) +
                                         " out of range in subspace " + std::to_string(m));
            }
            const float* micro =
                tables.values.data() + (std::uint64_t(m) * tables.ksub + k) * n_q;
            for (std::uint32_t i = 0; i < n_q; ++i) acc[i] += micro[i];
        }
        for (std::uint32_t i = 0; i < n_q; ++i) {
            out[std::uint64_t(i) * n_d + j] =
                centroid_scores[std::uint64_t(i) * n_d + j] + norms[j] * acc[i];
        }
    }
}

void score_tokens_naive(const std::uint8_t* codes, const float* norms, std::uint32_t n_d,
                        const NaiveDistanceTables& tables, const float* centroid_scores,
                        float* out) {
    const std::uint32_t n_q = tables.n_q;
    float stack_acc[64];
    std::vector<float> heap_acc(n_q > 64 ? n_q : 0);
    float* acc = n_q > 64 ? heap_acc.data() : stack_acc;
    for (std::uint32_t j = 0; j < n_d; ++j) {
        std::fill(acc, acc + n_q, 0.0f);
        const std::uint8_t* row = codes + std::uint64_t(j) * tables.M;
        for (std::uint32_t m = 0; m < tables.M; ++m) {
            const std::uint32_t k = row[m];
            if (k >= tables.ksub) {
                throw CorruptRecordError("score_tokens_naive: code " + std::to_string(k) +
                                         " out of range in subspace " + std::to_string(m));
            }
            for (std::uint32_t i = 0; i < n_q; ++i) {
                acc[i] += tables.values[(std::uint64_t(i) * tables.M + m) * tables.ksub + k];
            }
        }
        for (std::uint32_t i = 0; i < n_q; ++i) {
            out[std::uint64_t(i) * n_d + j] =
                centroid_scores[std::uint64_t(i) * n_d + j] + norms[j] * acc[i];
        }
    }
}

void save_codec(const PQCodec& codec, const std::filesystem::path& path) {
    io::FileWriter w(path);
    io::write_magic(w, kCodecMagic);
    w.write_u32(codec.M);
    w.write_u32(codec.bits);
    w.write_u32(codec.sub_dim);
    w.write_span(std::span<const float>(codec.codebooks));
    w.close();
}

PQCodec load_codec(const std::filesystem::path& path) {
    io::FileReader r(path);
    io::check_magic(r, kCodecMagic, "codec file " + path.string());
    PQCodec codec;
    codec.M = r.read_u32();
    codec.bits = r.read_u32();
    codec.sub_dim = r.read_u32();
    if (codec.M == 0 || codec.bits == 0 || codec.bits > 8 || codec.sub_dim == 0) {
        throw FormatError("codec file " + path.string() + ": bad header");
    }
    const std::uint64_t vals = std::uint64_t(codec.M) * codec.ksub() * codec.sub_dim;
    const std::uint64_t expect = 8 + 12 + vals * 4;
    if (r.size() != expect) {
        throw SizeMismatchError("codec file " + path.string() + ": expected " +
                                std::to_string(expect) + " bytes, found " +
                                std::to_string(r.size()));
    }
    codec.codebooks.resize(vals);
    r.read_span(std::span<float>(codec.codebooks));
    for (float v : codec.codebooks) {
        if (!std::isfinite(v)) {
            throw DataError("codec file " + path.string() + ": non-finite codeword value");
        }
    }
    return codec;
}

void save_compressed(const CompressedCorpus& cc, const std::filesystem::path& path) {
    io::FileWriter w(path);
    io::write_magic(w, kCompressedMagic);
    w.write_u64(cc.num_docs());
    w.write_u64(cc.num_tokens());
    w.write_u32(cc.M);
    w.write_span(std::span<const std::uint64_t>(cc.doc_offsets));
    for (std::uint64_t d = 0; d < cc.num_docs(); ++d) {
        const std::uint32_t n_d = cc.doc_len(d);
        w.write_span(std::span<const CentroidId>(cc.ids_of(d), n_d));
        w.write_span(std::span<const std::uint8_t>(cc.codes_of(d),
                                                   std::uint64_t(n_d) * cc.M));
        w.write_span(std::span<const float>(cc.norms_of(d), n_d));
    }
    w.close();
}

CompressedCorpus load_compressed(const std::filesystem::path& path) {
    io::FileReader r(path);
    io::check_magic(r, kCompressedMagic, "compressed corpus file " + path.string());
    const std::uint64_t docs = r.read_u64();
    const std::uint64_t tokens = r.read_u64();
    CompressedCorpus cc;
    cc.M = r.read_u32();
    if (cc.M == 0) {
        throw FormatError("compressed corpus file " + path.string() + ": zero subspaces");
    }
    const std::uint64_t expect =
        8 + 20 + (docs + 1) * 8 + tokens * (4 + std::uint64_t(cc.M) + 4);
    if (r.size() != expect) {
        throw SizeMismatchError("compressed corpus file " + path.string() + ": expected " +
                                std::to_string(expect) + " bytes, found " +
                                std::to_string(r.size()));
    }
    cc.doc_offsets.resize(docs + 1);
    r.read_span(std::span<std::uint64_t>(cc.doc_offsets));
    if (cc.doc_offsets.front() != 0 || cc.doc_offsets.back() != tokens) {
        throw DataError("compressed corpus file " + path.string() +
                        ": offset table does not span the token range");
    }
    for (std::uint64_t d = 0; d < docs; ++d) {
        if (cc.doc_offsets[d + 1] < cc.doc_offsets[d]) {
            throw OffsetOrderError("compressed corpus file " + path.string() +
                                   ": decreasing document offsets");
        }
    }
    cc.centroid_ids.resize(tokens);
    cc.codes.resize(tokens * cc.M);
    cc.residual_norms.resize(tokens);
    for (std::uint64_t d = 0; d < docs; ++d) {
        const std::uint64_t off = cc.doc_offsets[d];
        const std::uint32_t n_d =
            static_cast<std::uint32_t>(cc.doc_offsets[d + 1] - off);
        r.read_span(std::span<CentroidId>(cc.centroid_ids.data() + off, n_d));
        r.read_span(std::span<std::uint8_t>(cc.codes.data() + off * cc.M,
                                            std::uint64_t(n_d) * cc.M));
        r.read_span(std::span<float>(cc.residual_norms.data() + off, n_d));
    }
    return cc;
}

}  // namespace mvr
