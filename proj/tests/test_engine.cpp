#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "mvr/engine.hpp"
#include "support/oracles.hpp"

using namespace mvr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("mvr_eng_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

// End-to-end fixture: cluster, build an index directory, load it back.
struct Fixture {
    TempDir tmp;
    TokenVectorCorpus corpus;
    TokenPartitionedCodebook codebook;
    Assignment assignment;
    SearchIndex index;

    Fixture(std::uint64_t docs, std::uint32_t dim, std::uint32_t vocab,
            std::uint64_t budget, std::uint64_t seed, std::uint32_t pq_m = 4,
            std::uint64_t theta = 1) {
        corpus = oracle::random_corpus(docs, 6, 12, dim, vocab, seed);
        const TokenIndex idx = build_token_index(corpus);
        const auto stats = compute_token_stats(corpus, idx);
        AllocationParams p;
        p.budget = budget;
        p.mu = 0;
        p.tau = 0;
        p.epsilon = 1;
        p.theta = theta;
        const auto plan = allocate(stats, p);
        codebook = train(corpus, idx, stats, plan, 6, seed, 1);
        assignment = assign(corpus, idx, codebook, 1);
        IndexBuildParams bp;
        bp.pq_m = pq_m;
        bp.pq_bits = 6;
        bp.pq_iterations = 6;
        bp.graph_m = 8;
        bp.graph_ef_construction = 60;
        bp.seed = seed;
        build_index_dir(tmp.path / "index", corpus, codebook, assignment, bp);
        index = load_index_dir(tmp.path / "index");
    }
};

std::vector<float> unit_query(std::uint32_t n_q, std::uint32_t dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<float> q(std::size_t(n_q) * dim);
    oracle::fill_unit_rows(q.data(), n_q, dim, rng);
    return q;
}

SearchParams all_centroids_params(const SearchIndex& index) {
    SearchParams sp;
    sp.kappa_c = std::uint32_t(index.codebook.num_centroids());
    sp.exhaustive_centroids = true;
    sp.kappa_d = 1u << 30;
    sp.alpha = 1e-9f;
    return sp;
}

}  // namespace

TEST_CASE("gather with all centroids matches the set-based oracle") {
    const Fixture f(60, 8, 6, 18, 3);
    for (std::uint32_t n_q : {1u, 4u, 7u}) {
        const auto q = unit_query(n_q, 8, 100 + n_q);
        const CandidateSet got =
            gather(q.data(), n_q, f.index, all_centroids_params(f.index));
        const auto want =
            oracle::gather_oracle(q.data(), n_q, f.codebook, f.assignment, f.corpus);
        // Every doc is hit by some centroid when all centroids are retrieved.
        REQUIRE(got.size() == f.corpus.num_docs());
        for (const auto& [doc, score] : got) {
            CHECK(double(score) == doctest::Approx(want[doc]).epsilon(1e-5));
        }
    }
}

TEST_CASE("a document in two lists scores by its best centroid per token") {
    // Hand-built index pieces: one token, two centroids. The document has
    // two tokens assigned to different centroids; its gathered score for a
    // one-token query is the max of the two centroid dots, never the sum.
    const std::uint32_t dim = 4;
    TokenVectorCorpus corpus;
    corpus.dim = dim;
    corpus.vocab_size = 1;
    corpus.token_ids = {0, 0};
    corpus.doc_offsets = {0, 2};
    corpus.vectors = {1, 0, 0, 0, 0, 1, 0, 0};

    TokenPartitionedCodebook cb;
    cb.dim = dim;
    cb.vocab_size = 1;
    cb.centroids = {1, 0, 0, 0, 0, 1, 0, 0};
    cb.ranges = {{0, 2}};

    Assignment a;
    a.centroid_ids = {0, 1};
    a.residual_norms = {0.0f, 0.0f};

    TempDir tmp;
    IndexBuildParams bp;
    bp.pq_m = 2;
    bp.pq_bits = 1;
    bp.graph_m = 2;
    bp.graph_ef_construction = 8;
    build_index_dir(tmp.path / "index", corpus, cb, a, bp);
    const SearchIndex index = load_index_dir(tmp.path / "index");

    // Query token with dot 0.9 against centroid 0 and 0.7 against centroid 1.
    float q[dim] = {0.9f, 0.7f, 0.0f, 0.0f};
    const float inv = 1.0f / std::sqrt(0.81f + 0.49f);
    for (float& v : q) v *= inv;
    const CandidateSet got = gather(q, 1, index, all_centroids_params(index));
    REQUIRE(got.size() == 1);
    CHECK(got.at(0) == doctest::Approx(0.9f * inv).epsilon(1e-6));
}

TEST_CASE("truncate_and_prune keeps the top slice above the threshold") {
    CandidateSet cands;
    cands[11] = 10.0f;
    cands[3] = 6.0f;
    cands[7] = 4.0f;
    cands[1] = 3.0f;

    SUBCASE("cap then relative threshold") {
        const auto kept = truncate_and_prune(cands, 3, 0.5f);
        REQUIRE(kept.size() == 2);
        CHECK(kept[0].doc == 11);
        CHECK(kept[0].score == 10.0f);
        CHECK(kept[1].doc == 3);
        CHECK(kept[1].score == 6.0f);
    }
    SUBCASE("alpha near zero keeps the full cap") {
        const auto kept = truncate_and_prune(cands, 3, 1e-9f);
        REQUIRE(kept.size() == 3);
        CHECK(kept[2].doc == 7);
    }
    SUBCASE("alpha one keeps only ties with the best") {
        const auto kept = truncate_and_prune(cands, 4, 1.0f);
        REQUIRE(kept.size() == 1);
        CHECK(kept[0].doc == 11);
    }
    SUBCASE("cap larger than the set") {
        const auto kept = truncate_and_prune(cands, 100, 0.05f);
        CHECK(kept.size() == 4);
    }
    SUBCASE("empty input") {
        const auto kept = truncate_and_prune(CandidateSet{}, 5, 0.5f);
        CHECK(kept.empty());
    }
}

TEST_CASE("equal partial scores break ties by document id") {
    CandidateSet cands;
    cands[9] = 5.0f;
    cands[2] = 5.0f;
    cands[5] = 5.0f;
    cands[0] = 1.0f;
    const auto kept = truncate_and_prune(cands, 2, 0.1f);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].doc == 2);
    CHECK(kept[1].doc == 5);
}

TEST_CASE("pruned candidates are always drawn from the gathered set") {
    const Fixture f(80, 8, 5, 20, 7);
    const auto q = unit_query(4, 8, 11);
    SearchParams sp;
    sp.kappa_c = 3;
    sp.kappa_d = 10;
    sp.alpha = 0.4f;
    const CandidateSet cands = gather(q.data(), 4, f.index, sp);
    const auto kept = truncate_and_prune(cands, sp.kappa_d, sp.alpha);
    CHECK(kept.size() <= 10);
    for (const auto& sd : kept) {
        REQUIRE(cands.count(sd.doc) == 1);
        CHECK(sd.score == cands.at(sd.doc));
    }
}

TEST_CASE("gathered candidate sets grow with kappa_c") {
    const Fixture f(100, 8, 6, 30, 13);
    const auto q = unit_query(4, 8, 17);
    std::size_t prev = 0;
    for (std::uint32_t kc : {1u, 3u, 10u, 30u}) {
        SearchParams sp;
        sp.kappa_c = kc;
        sp.exhaustive_centroids = true;
        const CandidateSet cands = gather(q.data(), 4, f.index, sp);
        CHECK(cands.size() >= prev);
        prev = cands.size();
    }
}

TEST_CASE("refine ranks by the reconstructed MaxSim") {
    const Fixture f(50, 8, 5, 15, 19);
    const auto q = unit_query(5, 8, 23);
    // Feed every document through refine and compare against a double
    // MaxSim over explicitly reconstructed tokens.
    std::vector<ScoredDoc> all_docs;
    for (DocId d = 0; d < f.corpus.num_docs(); ++d) all_docs.push_back({d, 0.0f});
    const auto ranked = refine(q.data(), 5, all_docs, f.index,
                               std::uint32_t(f.corpus.num_docs()));
    REQUIRE(ranked.size() == f.corpus.num_docs());

    TokenVectorCorpus approx = f.corpus;  // same shape, reconstructed rows
    std::vector<float> rec(f.corpus.dim);
    for (std::uint64_t r = 0; r < f.corpus.num_vectors(); ++r) {
        reconstruct_token(f.index.codec, f.index.codebook,
                          f.index.compressed.centroid_ids[r],
                          f.index.compressed.codes.data() + r * f.index.codec.M,
                          f.index.compressed.residual_norms[r], rec.data());
        std::copy(rec.begin(), rec.end(), approx.vectors.begin() + r * f.corpus.dim);
    }
    const auto want = oracle::maxsim_double(q.data(), 5, approx);
    for (const auto& sd : ranked) {
        CHECK(double(sd.score) == doctest::Approx(want[sd.doc]).epsilon(1e-4));
    }
    // And the ordering is (score desc, id asc).
    for (std::size_t i = 1; i < ranked.size(); ++i) {
        const bool ordered = ranked[i - 1].score > ranked[i].score ||
                             (ranked[i - 1].score == ranked[i].score &&
                              ranked[i - 1].doc < ranked[i].doc);
        CHECK(ordered);
    }
}

TEST_CASE("lossless compression makes search exact") {
    // kappa = num distinct unit rows per token and a wide codec: residuals
    // are zero, so refine scores equal true MaxSim exactly.
    const std::uint32_t dim = 8;
    TokenVectorCorpus corpus;
    corpus.dim = dim;
    corpus.vocab_size = 2;
    std::mt19937_64 rng(29);
    // 12 docs x 3 tokens; token t of doc d reuses one of 4 distinct vectors.
    std::vector<float> pool(8 * dim);
    oracle::fill_unit_rows(pool.data(), 8, dim, rng);
    std::uniform_int_distribution<int> pick(0, 3);
    corpus.doc_offsets.push_back(0);
    for (int d = 0; d < 12; ++d) {
        for (int t = 0; t < 3; ++t) {
            const TokenId tok = TokenId(t % 2);
            const int v = pick(rng) + (tok == 1 ? 4 : 0);
            corpus.token_ids.push_back(tok);
            corpus.vectors.insert(corpus.vectors.end(), pool.begin() + v * dim,
                                  pool.begin() + (v + 1) * dim);
        }
        corpus.doc_offsets.push_back(corpus.token_ids.size());
    }
    const TokenIndex idx = build_token_index(corpus);
    const auto stats = compute_token_stats(corpus, idx);
    AllocationParams p;
    p.budget = 8;
    p.mu = 0;
    p.tau = 0;
    p.epsilon = 4;
    p.theta = 1;
    const auto plan = allocate(stats, p);
    REQUIRE(plan.centroids_per_token[0] == 4);
    REQUIRE(plan.centroids_per_token[1] == 4);
    const auto cb = train(corpus, idx, stats, plan, 10, 1, 1);
    const Assignment a = assign(corpus, idx, cb, 1);
    for (float rho : a.residual_norms) CHECK(rho <= 1e-5f);

    TempDir tmp;
    IndexBuildParams bp;
    bp.pq_m = 4;
    bp.pq_bits = 2;
    bp.graph_m = 4;
    bp.graph_ef_construction = 16;
    build_index_dir(tmp.path / "index", corpus, cb, a, bp);
    const SearchIndex index = load_index_dir(tmp.path / "index");

    const auto q = unit_query(4, dim, 31);
    const SearchResult res = search(q.data(), 4, index, all_centroids_params(index));
    const auto want = exhaustive_maxsim(q.data(), 4, corpus, 10);
    REQUIRE(res.ranking.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
        CHECK(res.ranking[i].doc == want[i].doc);
        CHECK(double(res.ranking[i].score) ==
              doctest::Approx(double(want[i].score)).epsilon(1e-4));
    }
}

TEST_CASE("searching with a document's own tokens finds it") {
    const Fixture f(60, 8, 5, 40, 37);
    // Use doc 7's tokens as the query; with generous parameters the doc
    // itself must rank first with score ~ its token count.
    const DocId target = 7;
    const float* q = f.corpus.row(f.corpus.doc_begin(target));
    const std::uint32_t n_q = f.corpus.doc_len(target);
    const SearchResult res = search(q, n_q, f.index, all_centroids_params(f.index));
    REQUIRE(!res.ranking.empty());
    CHECK(res.ranking[0].doc == target);
    // Approximate score: within PQ error of the perfect n_q.
    CHECK(res.ranking[0].score == doctest::Approx(float(n_q)).epsilon(0.05));
}

TEST_CASE("exhaustive MaxSim on one known document") {
    TokenVectorCorpus corpus;
    corpus.dim = 4;
    corpus.vocab_size = 1;
    corpus.token_ids = {0, 0};
    corpus.doc_offsets = {0, 2};
    corpus.vectors = {1, 0, 0, 0, 0, 1, 0, 0};
    // Two query tokens: q0 best-matches token 0 (dot 1.0), q1 best-matches
    // token 1 (dot 0.8 vs 0.6 for token 0).
    const float q[8] = {1, 0, 0, 0, 0.6f, 0.8f, 0, 0};
    const auto got = exhaustive_maxsim(q, 2, corpus, 5);
    REQUIRE(got.size() == 1);
    CHECK(got[0].doc == 0);
    CHECK(got[0].score == doctest::Approx(1.0f + 0.8f).epsilon(1e-6));
}

TEST_CASE("exhaustive MaxSim is invariant to document token order") {
    auto corpus = oracle::random_corpus(30, 5, 9, 8, 4, 41);
    const auto q = unit_query(4, 8, 43);
    const auto base = exhaustive_maxsim(q.data(), 4, corpus, corpus.num_docs());

    // Reverse the token order inside every document.
    TokenVectorCorpus shuffled = corpus;
    for (DocId d = 0; d < corpus.num_docs(); ++d) {
        const std::uint64_t b = corpus.doc_begin(d), e = corpus.doc_end(d);
        for (std::uint64_t r = b; r < e; ++r) {
            const std::uint64_t src = e - 1 - (r - b);
            shuffled.token_ids[r] = corpus.token_ids[src];
            std::copy(corpus.row(src), corpus.row(src) + corpus.dim,
                      shuffled.vectors.begin() + r * corpus.dim);
        }
    }
    const auto perm = exhaustive_maxsim(q.data(), 4, shuffled, corpus.num_docs());
    REQUIRE(base.size() == perm.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        CHECK(base[i].doc == perm[i].doc);
        CHECK(base[i].score == perm[i].score);
    }
}

TEST_CASE("exhaustive MaxSim agrees with the double-precision oracle") {
    const auto corpus = oracle::random_corpus(50, 5, 10, 16, 6, 47);
    const auto q = unit_query(6, 16, 53);
    const auto got = exhaustive_maxsim(q.data(), 6, corpus, corpus.num_docs());
    const auto want = oracle::maxsim_double(q.data(), 6, corpus);
    for (const auto& sd : got) {
        CHECK(double(sd.score) == doctest::Approx(want[sd.doc]).epsilon(1e-5));
    }
}

TEST_CASE("rerank mode scores only the requested documents") {
    const auto corpus = oracle::random_corpus(40, 5, 9, 8, 4, 59);
    const auto q = unit_query(3, 8, 61);
    const std::vector<DocId> subset = {3, 17, 29, 5};
    const auto got = exhaustive_maxsim(q.data(), 3, corpus, 10, &subset);
    REQUIRE(got.size() == 4);
    for (const auto& sd : got) {
        CHECK(std::find(subset.begin(), subset.end(), sd.doc) != subset.end());
    }
    const auto full = exhaustive_maxsim(q.data(), 3, corpus, corpus.num_docs());
    for (const auto& sd : got) {
        for (const auto& fd : full) {
            if (fd.doc == sd.doc) CHECK(fd.score == sd.score);
        }
    }

    const std::vector<DocId> bad = {3, 999};
    CHECK_THROWS_AS(exhaustive_maxsim(q.data(), 3, corpus, 10, &bad), DataError);
}

TEST_CASE("search parameter validation") {
    const Fixture f(20, 8, 4, 8, 67);
    const auto q = unit_query(2, 8, 71);
    SearchParams sp;

    sp.kappa_c = 0;
    CHECK_THROWS_AS(search(q.data(), 2, f.index, sp), UsageError);
    sp = SearchParams{};
    sp.k = 0;
    CHECK_THROWS_AS(search(q.data(), 2, f.index, sp), UsageError);
    sp = SearchParams{};
    sp.kappa_d = 5;
    sp.k = 6;
    CHECK_THROWS_AS(search(q.data(), 2, f.index, sp), UsageError);
    sp = SearchParams{};
    sp.alpha = 0.0f;
    CHECK_THROWS_AS(search(q.data(), 2, f.index, sp), UsageError);
    sp = SearchParams{};
    sp.alpha = 1.5f;
    CHECK_THROWS_AS(search(q.data(), 2, f.index, sp), UsageError);
}

TEST_CASE("k larger than the candidate pool returns every candidate") {
    const Fixture f(15, 8, 4, 6, 73);
    const auto q = unit_query(3, 8, 79);
    SearchParams sp = all_centroids_params(f.index);
    sp.k = 500;
    sp.kappa_d = 1u << 20;
    const SearchResult res = search(q.data(), 3, f.index, sp);
    CHECK(res.ranking.size() == f.corpus.num_docs());
}

TEST_CASE("phase timings and op counters are populated") {
    const Fixture f(80, 8, 6, 24, 83);
    const auto q = unit_query(4, 8, 89);
    SearchParams sp;
    sp.kappa_c = 5;
    sp.kappa_d = 50;
    sp.alpha = 0.3f;
    sp.k = 10;
    sp.ef_search = 8;
    const SearchResult res = search(q.data(), 4, f.index, sp);
    CHECK(res.timings.candidates_after_gather > 0);
    CHECK(res.timings.candidates_after_prune > 0);
    CHECK(res.timings.candidates_after_prune <= res.timings.candidates_after_gather);
    CHECK(res.timings.candidates_after_prune <= 50);
    CHECK(res.timings.gather_dot_ops > 0);
    CHECK(res.timings.refine_dot_ops > 0);
    CHECK(res.timings.table_lookup_ops ==
          res.timings.refine_dot_ops * f.index.codec.M);
    CHECK(res.timings.total_us >=
          res.timings.gather_us + res.timings.prune_us + res.timings.refine_us);

    // Exhaustive gather counts exactly n_q * num_centroids dots.
    std::uint64_t dots = 0;
    gather(q.data(), 4, f.index, all_centroids_params(f.index), nullptr, &dots);
    CHECK(dots == 4 * f.index.codebook.num_centroids());
}
