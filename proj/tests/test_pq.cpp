#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "mvr/pq.hpp"
#include "support/oracles.hpp"

using namespace mvr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("mvr_pq_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

// Fixture: cluster a small corpus and encode it.
struct Encoded {
    TokenVectorCorpus corpus;
    TokenPartitionedCodebook codebook;
    Assignment assignment;
    PQCodec codec;
    CompressedCorpus cc;
};

Encoded make_encoded(std::uint64_t docs, std::uint32_t dim, std::uint32_t vocab,
                     std::uint64_t budget, std::uint32_t M, std::uint32_t bits,
                     std::uint64_t seed) {
    Encoded e;
    e.corpus = oracle::random_corpus(docs, 6, 12, dim, vocab, seed);
    const TokenIndex idx = build_token_index(e.corpus);
    const auto stats = compute_token_stats(e.corpus, idx);
    AllocationParams p;
    p.budget = budget;
    p.mu = 0;
    p.tau = 0;
    p.epsilon = 1;
    p.theta = 1;
    const auto plan = allocate(stats, p);
    e.codebook = train(e.corpus, idx, stats, plan, 6, seed, 1);
    e.assignment = assign(e.corpus, idx, e.codebook, 1);

    std::vector<float> residuals;
    for (std::uint64_t r = 0; r < e.corpus.num_vectors(); ++r) {
        const float rho = e.assignment.residual_norms[r];
        if (rho <= 0.0f) continue;
        const float* x = e.corpus.row(r);
        const float* c = e.codebook.centroid(e.assignment.centroid_ids[r]);
        for (std::uint32_t j = 0; j < dim; ++j) {
            residuals.push_back((x[j] - c[j]) / rho);
        }
    }
    e.codec = train_pq(residuals.data(), residuals.size() / dim, dim, M, bits, 8, seed);
    e.cc = encode(e.corpus, e.assignment, e.codebook, e.codec);
    return e;
}

}  // namespace

TEST_CASE("train_pq validates its parameters") {
    std::vector<float> data(64 * 8, 0.1f);
    CHECK_THROWS_AS(train_pq(data.data(), 64, 8, 3, 4, 5, 0), UsageError);   // dim % M != 0
    CHECK_THROWS_AS(train_pq(data.data(), 64, 8, 4, 0, 5, 0), UsageError);   // bits < 1
    CHECK_THROWS_AS(train_pq(data.data(), 64, 8, 4, 9, 5, 0), UsageError);   // bits > 8
    CHECK_THROWS_AS(train_pq(data.data(), 8, 8, 4, 4, 5, 0), UsageError);    // count < ksub
    CHECK_THROWS_AS(train_pq(data.data(), 0, 8, 4, 4, 5, 0), UsageError);
}

TEST_CASE("2^bits distinct subspace values are coded losslessly") {
    // 16 distinct vectors, bits=4: every vector becomes its own codeword.
    std::mt19937_64 rng(11);
    const std::uint32_t dim = 8, M = 4, bits = 4;
    std::vector<float> data(16 * dim);
    oracle::fill_unit_rows(data.data(), 16, dim, rng);
    const PQCodec codec = train_pq(data.data(), 16, dim, M, bits, 25, 1);
    CHECK(codec.sub_dim == 2);
    CHECK(codec.ksub() == 16);
    CHECK(codec.dim() == dim);

    // Encode by brute force and reconstruct.
    std::vector<float> rec(dim);
    for (std::uint32_t i = 0; i < 16; ++i) {
        std::vector<std::uint8_t> code(M);
        for (std::uint32_t m = 0; m < M; ++m) {
            float best = std::numeric_limits<float>::max();
            for (std::uint32_t k = 0; k < codec.ksub(); ++k) {
                const float d = l2_distance(data.data() + i * dim + m * codec.sub_dim,
                                            codec.codeword(m, k), codec.sub_dim);
                if (d < best) {
                    best = d;
                    code[m] = std::uint8_t(k);
                }
            }
        }
        decode(codec, code.data(), rec.data());
        for (std::uint32_t j = 0; j < dim; ++j) {
            CHECK(rec[j] == doctest::Approx(data[i * dim + j]).epsilon(5e-5));
        }
    }
}

TEST_CASE("trained codewords beat random codewords on reconstruction error") {
    std::mt19937_64 rng(13);
    const std::uint32_t dim = 16, M = 4, bits = 4;
    const std::uint64_t n = 600;
    std::vector<float> data(n * dim);
    oracle::fill_unit_rows(data.data(), n, dim, rng);
    const PQCodec trained = train_pq(data.data(), n, dim, M, bits, 10, 2);

    PQCodec random_codec = trained;
    std::mt19937_64 rng2(99);
    oracle::fill_unit_rows(random_codec.codebooks.data(),
                           std::size_t(M) * trained.ksub(), trained.sub_dim, rng2);

    auto mse = [&](const PQCodec& codec) {
        double total = 0.0;
        std::vector<float> rec(dim);
        for (std::uint64_t i = 0; i < n; ++i) {
            std::vector<std::uint8_t> code(M);
            for (std::uint32_t m = 0; m < M; ++m) {
                float best = std::numeric_limits<float>::max();
                for (std::uint32_t k = 0; k < codec.ksub(); ++k) {
                    const float d = l2_distance(data.data() + i * dim + m * codec.sub_dim,
                                                codec.codeword(m, k), codec.sub_dim);
                    if (d < best) {
                        best = d;
                        code[m] = std::uint8_t(k);
                    }
                }
            }
            decode(codec, code.data(), rec.data());
            for (std::uint32_t j = 0; j < dim; ++j) {
                const double dlt = double(rec[j]) - data[i * dim + j];
                total += dlt * dlt;
            }
        }
        return total / double(n);
    };
    CHECK(mse(trained) < mse(random_codec));
}

TEST_CASE("encode stores M code bytes per token") {
    const auto e = make_encoded(30, 8, 6, 12, 4, 4, 21);
    CHECK(e.cc.M == 4);
    CHECK(e.cc.num_docs() == e.corpus.num_docs());
    CHECK(e.cc.num_tokens() == e.corpus.num_vectors());
    CHECK(e.cc.codes.size() == e.corpus.num_vectors() * 4);
    CHECK(e.cc.centroid_ids == e.assignment.centroid_ids);
    CHECK(e.cc.residual_norms == e.assignment.residual_norms);
    CHECK(e.cc.doc_offsets == e.corpus.doc_offsets);
}

TEST_CASE("zero residuals produce zero codes and centroid reconstruction") {
    // One token, one centroid: place one vector exactly at the centroid
    // direction so its residual norm is (near) zero.
    const std::uint32_t dim = 8;
    TokenVectorCorpus corpus;
    corpus.dim = dim;
    corpus.vocab_size = 1;
    std::mt19937_64 rng(31);
    corpus.vectors.resize(9 * dim);
    oracle::fill_unit_rows(corpus.vectors.data(), 8, dim, rng);
    corpus.token_ids.assign(9, 0);
    corpus.doc_offsets = {0, 9};
    // Compute the renormalized mean of the first 8 rows and plant it as row 8.
    std::vector<double> mean(dim, 0.0);
    for (int i = 0; i < 8; ++i) {
        for (std::uint32_t j = 0; j < dim; ++j) mean[j] += corpus.vectors[i * dim + j];
    }
    double norm = 0.0;
    for (std::uint32_t j = 0; j < dim; ++j) norm += (mean[j] / 8) * (mean[j] / 8);
    norm = std::sqrt(norm);
    for (std::uint32_t j = 0; j < dim; ++j) {
        corpus.vectors[8 * dim + j] = float((mean[j] / 8) / norm);
    }

    const TokenIndex idx = build_token_index(corpus);
    const auto stats = compute_token_stats(corpus, idx);
    AllocationParams p;
    p.budget = 1;
    p.mu = 0;
    p.tau = 0;
    p.epsilon = 1;
    p.theta = 1;
    const auto plan = allocate(stats, p);
    // Train on the first 8 rows only so the mean is exactly their mean.
    TokenVectorCorpus train_corpus = corpus;
    train_corpus.vectors.resize(8 * dim);
    train_corpus.token_ids.resize(8);
    train_corpus.doc_offsets = {0, 8};
    const TokenIndex train_idx = build_token_index(train_corpus);
    const auto cb = train(train_corpus, train_idx,
                          compute_token_stats(train_corpus, train_idx), plan, 5, 0, 1);
    Assignment a = assign(corpus, idx, cb, 1);
    CHECK(a.residual_norms[8] <= 1e-5f);
    a.residual_norms[8] = 0.0f;  // force the exact zero-residual path

    // A codec trained on the other rows' residuals.
    std::vector<float> residuals;
    for (int r = 0; r < 8; ++r) {
        const float rho = a.residual_norms[r];
        REQUIRE(rho > 0.0f);
        for (std::uint32_t j = 0; j < dim; ++j) {
            residuals.push_back((corpus.row(r)[j] - cb.centroid(a.centroid_ids[r])[j]) / rho);
        }
    }
    const PQCodec codec = train_pq(residuals.data(), 8, dim, 4, 2, 8, 3);
    const CompressedCorpus cc = encode(corpus, a, cb, codec);
    for (std::uint32_t m = 0; m < 4; ++m) CHECK(cc.codes[8 * 4 + m] == 0);

    std::vector<float> rec(dim);
    reconstruct_token(codec, cb, a.centroid_ids[8], cc.codes.data() + 8 * 4, 0.0f,
                      rec.data());
    for (std::uint32_t j = 0; j < dim; ++j) {
        CHECK(rec[j] == cb.centroid(a.centroid_ids[8])[j]);
    }
}

TEST_CASE("re-encoding reconstructed residuals is idempotent") {
    const auto e = make_encoded(40, 8, 6, 10, 4, 4, 41);
    // Reconstruct each token, then re-encode its residual: same codes.
    std::vector<float> rec(e.corpus.dim);
    for (std::uint64_t r = 0; r < std::min<std::uint64_t>(e.corpus.num_vectors(), 50); ++r) {
        const float rho = e.cc.residual_norms[r];
        if (rho <= 0.0f) continue;
        decode(e.codec, e.cc.codes.data() + r * e.codec.M, rec.data());
        // rec is the normalized residual reconstruction; the nearest
        // codeword of rec in every subspace is the stored code itself.
        for (std::uint32_t m = 0; m < e.codec.M; ++m) {
            float best = std::numeric_limits<float>::max();
            std::uint8_t best_k = 0;
            for (std::uint32_t k = 0; k < e.codec.ksub(); ++k) {
                const float d = l2_distance(rec.data() + m * e.codec.sub_dim,
                                            e.codec.codeword(m, k), e.codec.sub_dim);
                if (d < best) {
                    best = d;
                    best_k = std::uint8_t(k);
                }
            }
            CHECK(best_k == e.cc.codes[r * e.codec.M + m]);
        }
    }
}

TEST_CASE("distance table entries are subspace dot products") {
    std::mt19937_64 rng(51);
    const std::uint32_t dim = 8, M = 4, bits = 2, n_q = 3;
    std::vector<float> data(32 * dim);
    oracle::fill_unit_rows(data.data(), 32, dim, rng);
    const PQCodec codec = train_pq(data.data(), 32, dim, M, bits, 6, 4);
    std::vector<float> query(n_q * dim);
    oracle::fill_unit_rows(query.data(), n_q, dim, rng);

    const DistanceTables t = build_distance_tables(query.data(), n_q, codec);
    CHECK(t.M == M);
    CHECK(t.ksub == 4);
    CHECK(t.n_q == n_q);
    REQUIRE(t.values.size() == std::size_t(M) * 4 * n_q);
    for (std::uint32_t m = 0; m < M; ++m) {
        for (std::uint32_t k = 0; k < 4; ++k) {
            for (std::uint32_t i = 0; i < n_q; ++i) {
                const float want = dot(query.data() + i * dim + m * codec.sub_dim,
                                       codec.codeword(m, k), codec.sub_dim);
                // Three-level layout: subspace macro-block, codeword block,
                // then n_q contiguous query entries.
                CHECK(t.values[(std::size_t(m) * 4 + k) * n_q + i] ==
                      doctest::Approx(want).epsilon(1e-5));
            }
        }
    }

    const NaiveDistanceTables nt = build_naive_tables(query.data(), n_q, codec);
    for (std::uint32_t i = 0; i < n_q; ++i) {
        for (std::uint32_t m = 0; m < M; ++m) {
            for (std::uint32_t k = 0; k < 4; ++k) {
                CHECK(nt.values[(std::size_t(i) * M + m) * 4 + k] ==
                      t.values[(std::size_t(m) * 4 + k) * n_q + i]);
            }
        }
    }
}

TEST_CASE("centroid-block stride with ksub=4 is 4*n_q") {
    std::mt19937_64 rng(52);
    const std::uint32_t dim = 8, M = 2, bits = 2, n_q = 5;
    std::vector<float> data(16 * dim);
    oracle::fill_unit_rows(data.data(), 16, dim, rng);
    const PQCodec codec = train_pq(data.data(), 16, dim, M, bits, 6, 5);
    std::vector<float> query(n_q * dim);
    oracle::fill_unit_rows(query.data(), n_q, dim, rng);
    const DistanceTables t = build_distance_tables(query.data(), n_q, codec);
    // Moving one whole subspace forward skips ksub * n_q = 4 * n_q entries.
    const float want = dot(query.data() + 0 * dim + 1 * codec.sub_dim,
                           codec.codeword(1, 0), codec.sub_dim);
    CHECK(t.values[4 * n_q] == doctest::Approx(want).epsilon(1e-5));
}

TEST_CASE("both table layouts score documents bitwise-identically") {
    std::mt19937_64 rng(61);
    for (int trial = 0; trial < 120; ++trial) {
        const std::uint32_t M = (trial % 3 == 0) ? 2u : 4u;
        const std::uint32_t bits = 2 + trial % 3;
        const std::uint32_t dim = M * (2 + trial % 4);
        const std::uint32_t n_q = 1 + trial % 9;
        const std::uint32_t n_d = 1 + trial % 17;
        const std::uint32_t ksub = 1u << bits;
        std::vector<float> train_data(std::size_t(ksub * 2) * dim);
        oracle::fill_unit_rows(train_data.data(), ksub * 2, dim, rng);
        const PQCodec codec = train_pq(train_data.data(), ksub * 2, dim, M, bits, 4, trial);

        std::vector<float> query(std::size_t(n_q) * dim);
        oracle::fill_unit_rows(query.data(), n_q, dim, rng);
        std::vector<std::uint8_t> codes(std::size_t(n_d) * M);
        std::uniform_int_distribution<std::uint32_t> code_dist(0, ksub - 1);
        for (auto& c : codes) c = std::uint8_t(code_dist(rng));
        std::vector<float> norms(n_d);
        std::uniform_real_distribution<float> norm_dist(0.0f, 1.5f);
        for (auto& v : norms) v = norm_dist(rng);
        if (trial % 5 == 0) norms[0] = 0.0f;
        std::vector<float> centroid_scores(std::size_t(n_q) * n_d);
        std::uniform_real_distribution<float> cs_dist(-1.0f, 1.0f);
        for (auto& v : centroid_scores) v = cs_dist(rng);

        const DistanceTables t = build_distance_tables(query.data(), n_q, codec);
        const NaiveDistanceTables nt = build_naive_tables(query.data(), n_q, codec);
        std::vector<float> out_a(std::size_t(n_q) * n_d, -9.0f);
        std::vector<float> out_b(std::size_t(n_q) * n_d, 9.0f);
        score_tokens(codes.data(), norms.data(), n_d, t, centroid_scores.data(),
                     out_a.data());
        score_tokens_naive(codes.data(), norms.data(), n_d, nt, centroid_scores.data(),
                           out_b.data());
        REQUIRE(std::memcmp(out_a.data(), out_b.data(), out_a.size() * sizeof(float)) == 0);
    }
}

TEST_CASE("all-zero residual norms reduce scores to the centroid scores") {
    std::mt19937_64 rng(71);
    const std::uint32_t dim = 8, M = 4, bits = 3, n_q = 4, n_d = 6;
    std::vector<float> data(16 * dim);
    oracle::fill_unit_rows(data.data(), 16, dim, rng);
    const PQCodec codec = train_pq(data.data(), 16, dim, M, bits, 5, 7);
    std::vector<float> query(n_q * dim);
    oracle::fill_unit_rows(query.data(), n_q, dim, rng);
    std::vector<std::uint8_t> codes(n_d * M, 3);
    std::vector<float> norms(n_d, 0.0f);
    std::vector<float> centroid_scores(n_q * n_d);
    for (std::size_t i = 0; i < centroid_scores.size(); ++i) {
        centroid_scores[i] = 0.01f * float(i);
    }
    const DistanceTables t = build_distance_tables(query.data(), n_q, codec);
    std::vector<float> out(n_q * n_d);
    score_tokens(codes.data(), norms.data(), n_d, t, centroid_scores.data(), out.data());
    CHECK(out == centroid_scores);
}

TEST_CASE("scored approximation tracks the true dot product") {
    // Full pipeline on a small corpus: score_tokens vs <q, reconstruction>.
    const auto e = make_encoded(25, 8, 4, 16, 4, 6, 81);
    std::mt19937_64 rng(82);
    const std::uint32_t n_q = 4;
    std::vector<float> query(n_q * e.corpus.dim);
    oracle::fill_unit_rows(query.data(), n_q, e.corpus.dim, rng);
    const DistanceTables t = build_distance_tables(query.data(), n_q, e.codec);

    std::vector<float> rec(e.corpus.dim);
    for (DocId d = 0; d < std::min<std::uint64_t>(e.cc.num_docs(), 8); ++d) {
        const std::uint32_t n_d = e.cc.doc_len(d);
        std::vector<float> centroid_scores(n_q * n_d);
        for (std::uint32_t i = 0; i < n_q; ++i) {
            for (std::uint32_t j = 0; j < n_d; ++j) {
                centroid_scores[i * n_d + j] =
                    dot(query.data() + i * e.corpus.dim,
                        e.codebook.centroid(e.cc.ids_of(d)[j]), e.corpus.dim);
            }
        }
        std::vector<float> out(n_q * n_d);
        score_tokens(e.cc.codes_of(d), e.cc.norms_of(d), n_d, t, centroid_scores.data(),
                     out.data());
        for (std::uint32_t i = 0; i < n_q; ++i) {
            for (std::uint32_t j = 0; j < n_d; ++j) {
                reconstruct_token(e.codec, e.codebook, e.cc.ids_of(d)[j],
                                  e.cc.codes_of(d) + std::size_t(j) * e.codec.M,
                                  e.cc.norms_of(d)[j], rec.data());
                const float want = dot(query.data() + i * e.corpus.dim, rec.data(),
                                       e.corpus.dim);
                CHECK(out[i * n_d + j] == doctest::Approx(want).epsilon(2e-4));
            }
        }
    }
}

TEST_CASE("codec files round trip and reject corruption") {
    std::mt19937_64 rng(91);
    const std::uint32_t dim = 8, M = 4, bits = 3;
    std::vector<float> data(20 * dim);
    oracle::fill_unit_rows(data.data(), 20, dim, rng);
    const PQCodec codec = train_pq(data.data(), 20, dim, M, bits, 5, 9);
    TempDir tmp;
    const fs::path path = tmp.path / "codec.bin";
    save_codec(codec, path);
    const PQCodec back = load_codec(path);
    CHECK(back.M == codec.M);
    CHECK(back.bits == codec.bits);
    CHECK(back.sub_dim == codec.sub_dim);
    CHECK(back.codebooks == codec.codebooks);

    SUBCASE("bad magic") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("BADBAD!!", 8);
        f.close();
        CHECK_THROWS_AS(load_codec(path), FormatError);
    }
    SUBCASE("truncated") {
        fs::resize_file(path, fs::file_size(path) - 5);
        CHECK_THROWS_AS(load_codec(path), DataError);
    }
    SUBCASE("NaN codeword") {
        const float nan = std::numeric_limits<float>::quiet_NaN();
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(20);  // first codebook entry, after the 20-byte header
        f.write(reinterpret_cast<const char*>(&nan), 4);
        f.close();
        CHECK_THROWS_AS(load_codec(path), DataError);
    }
}

TEST_CASE("compressed corpus files round trip and reject corruption") {
    const auto e = make_encoded(20, 8, 4, 8, 4, 3, 101);
    TempDir tmp;
    const fs::path path = tmp.path / "corpus.bin";
    save_compressed(e.cc, path);
    const CompressedCorpus back = load_compressed(path);
    CHECK(back.M == e.cc.M);
    CHECK(back.centroid_ids == e.cc.centroid_ids);
    CHECK(back.codes == e.cc.codes);
    CHECK(back.residual_norms == e.cc.residual_norms);
    CHECK(back.doc_offsets == e.cc.doc_offsets);

    SUBCASE("bad magic") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("WRONG!!!", 8);
        f.close();
        CHECK_THROWS_AS(load_compressed(path), FormatError);
    }
    SUBCASE("truncated") {
        fs::resize_file(path, fs::file_size(path) - 3);
        CHECK_THROWS_AS(load_compressed(path), DataError);
    }
    SUBCASE("decreasing document offsets") {
        // Patch offsets[1] (at byte 36: 28-byte header + one u64) above the
        // token count.
        const std::uint64_t bad = e.cc.num_tokens() + 5;
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(36);
        f.write(reinterpret_cast<const char*>(&bad), 8);
        f.close();
        CHECK_THROWS_AS(load_compressed(path), OffsetOrderError);
    }
}

TEST_CASE("codes out of ksub range are rejected at scoring time") {
    std::mt19937_64 rng(111);
    const std::uint32_t dim = 8, M = 4, bits = 3, n_q = 2, n_d = 3;
    std::vector<float> data(16 * dim);
    oracle::fill_unit_rows(data.data(), 16, dim, rng);
    const PQCodec codec = train_pq(data.data(), 16, dim, M, bits, 5, 11);
    std::vector<float> query(n_q * dim);
    oracle::fill_unit_rows(query.data(), n_q, dim, rng);
    std::vector<std::uint8_t> codes(n_d * M, 0);
    codes[5] = 200;  // bits=3 leaves codes 8..255 invalid
    std::vector<float> norms(n_d, 0.5f);
    std::vector<float> centroid_scores(n_q * n_d, 0.0f);
    std::vector<float> out(n_q * n_d);
    const DistanceTables t = build_distance_tables(query.data(), n_q, codec);
    CHECK_THROWS_AS(
        score_tokens(codes.data(), norms.data(), n_d, t, centroid_scores.data(), out.data()),
        CorruptRecordError);
    const NaiveDistanceTables nt = build_naive_tables(query.data(), n_q, codec);
    CHECK_THROWS_AS(score_tokens_naive(codes.data(), norms.data(), n_d, nt,
                                       centroid_scores.data(), out.data()),
                    CorruptRecordError);
}
