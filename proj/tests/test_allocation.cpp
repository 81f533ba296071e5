#include <doctest.h>

#include <cmath>
#include <random>

#include "mvr/allocation.hpp"
#include "support/oracles.hpp"

using namespace mvr;

namespace {

TokenVectorCorpus corpus_from_rows(std::uint32_t dim, std::uint32_t vocab,
                                   const std::vector<TokenId>& tokens,
                                   const std::vector<float>& rows) {
    TokenVectorCorpus c;
    c.dim = dim;
    c.vocab_size = vocab;
    c.token_ids = tokens;
    c.vectors = rows;
    c.doc_offsets = {0, tokens.size()};
    return c;
}

std::vector<TokenStats> stats_of(const TokenVectorCorpus& c, std::uint64_t cap = 1 << 18) {
    return compute_token_stats(c, build_token_index(c), cap, 0);
}

TokenStats make_stats(TokenId id, std::uint64_t count, double weight) {
    TokenStats s;
    s.token_id = id;
    s.count = count;
    s.spread = count ? float(weight / std::sqrt(double(count))) : 0.0f;
    s.weight = weight;
    return s;
}

}  // namespace

TEST_CASE("token index groups rows by token") {
    const auto c = corpus_from_rows(2, 4, {3, 1, 3, 0, 1},
                                    {1, 0, 0, 1, 1, 0, 0, 1, 1, 0});
    const TokenIndex idx = build_token_index(c);
    CHECK(idx.count(0) == 1);
    CHECK(idx.count(1) == 2);
    CHECK(idx.count(2) == 0);
    CHECK(idx.count(3) == 2);
    CHECK(idx.rows_of(3)[0] == 0);
    CHECK(idx.rows_of(3)[1] == 2);
    CHECK(idx.rows_of(1)[0] == 1);
    CHECK(idx.rows_of(1)[1] == 4);
}

TEST_CASE("two-point token stats: mean and spread") {
    const auto c = corpus_from_rows(2, 1, {0, 0}, {0, 0, 2, 0});
    const auto stats = stats_of(c);
    REQUIRE(stats.size() == 1);
    CHECK(stats[0].count == 2);
    CHECK(stats[0].mean[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(stats[0].mean[1] == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(stats[0].spread == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(stats[0].weight == doctest::Approx(std::sqrt(2.0)).epsilon(1e-6));
}

TEST_CASE("identical occurrences give zero spread and weight") {
    std::vector<TokenId> tokens(10, 0);
    std::vector<float> rows;
    for (int i = 0; i < 10; ++i) {
        rows.push_back(0.6f);
        rows.push_back(0.8f);
    }
    const auto stats = stats_of(corpus_from_rows(2, 1, tokens, rows));
    REQUIRE(stats.size() == 1);
    CHECK(stats[0].spread == 0.0f);
    CHECK(stats[0].weight == 0.0);
}

TEST_CASE("spreads match a brute-force double recomputation") {
    const auto corpus = oracle::random_corpus(40, 8, 16, 8, 3, 99);
    const auto stats = stats_of(corpus);
    const TokenIndex idx = build_token_index(corpus);
    for (const TokenStats& s : stats) {
        const std::uint64_t n = idx.count(s.token_id);
        REQUIRE(n == s.count);
        std::vector<double> mean(corpus.dim, 0.0);
        for (std::uint64_t r = 0; r < n; ++r) {
            const float* row = corpus.row(idx.rows_of(s.token_id)[r]);
            for (std::uint32_t c = 0; c < corpus.dim; ++c) mean[c] += row[c];
        }
        for (double& m : mean) m /= double(n);
        double spread = 0.0;
        for (std::uint64_t r = 0; r < n; ++r) {
            const float* row = corpus.row(idx.rows_of(s.token_id)[r]);
            for (std::uint32_t c = 0; c < corpus.dim; ++c) {
                const double dlt = row[c] - mean[c];
                spread += dlt * dlt;
            }
        }
        spread /= double(n);
        CHECK(double(s.spread) == doctest::Approx(spread).epsilon(1e-6));
        CHECK(s.weight == doctest::Approx(std::sqrt(double(n)) * spread).epsilon(1e-6));
        for (std::uint32_t c = 0; c < corpus.dim; ++c) {
            CHECK(double(s.mean[c]) == doctest::Approx(mean[c]).epsilon(1e-5));
        }
    }
}

TEST_CASE("sampled stats keep the exact count") {
    const auto corpus = oracle::random_corpus(50, 16, 16, 4, 2, 5);
    const auto full = stats_of(corpus);
    const auto sampled = stats_of(corpus, 64);
    REQUIRE(full.size() == sampled.size());
    for (std::size_t i = 0; i < full.size(); ++i) {
        CHECK(sampled[i].count == full[i].count);
        CHECK(sampled[i].count > 64);
        CHECK(std::isfinite(sampled[i].spread));
        // A 64-point estimate of a few hundred draws stays in the ballpark.
        CHECK(sampled[i].spread == doctest::Approx(full[i].spread).epsilon(0.5));
    }
}

TEST_CASE("doubling a token's count scales its weight by sqrt(2)") {
    const auto base = oracle::random_corpus(10, 8, 8, 4, 1, 11);
    TokenVectorCorpus doubled = base;
    doubled.vectors.insert(doubled.vectors.end(), base.vectors.begin(), base.vectors.end());
    doubled.token_ids.insert(doubled.token_ids.end(), base.token_ids.begin(),
                             base.token_ids.end());
    doubled.doc_offsets = {0, doubled.token_ids.size()};
    const auto s1 = stats_of(base);
    const auto s2 = stats_of(doubled);
    REQUIRE(s1.size() == 1);
    REQUIRE(s2.size() == 1);
    CHECK(s2[0].count == 2 * s1[0].count);
    CHECK(s2[0].weight == doctest::Approx(std::sqrt(2.0) * s1[0].weight).epsilon(1e-5));
}

TEST_CASE("hand-worked allocation: three active tokens, budget 20") {
    std::vector<TokenStats> stats = {
        make_stats(0, 1000, std::sqrt(1000.0) * 2.0),
        make_stats(1, 500, std::sqrt(500.0) * 1.0),
        make_stats(2, 200, std::sqrt(200.0) * 4.0),
    };
    CHECK(stats[0].weight == doctest::Approx(63.246).epsilon(1e-4));
    CHECK(stats[1].weight == doctest::Approx(22.361).epsilon(1e-4));
    CHECK(stats[2].weight == doctest::Approx(56.569).epsilon(1e-4));

    AllocationParams p;
    p.budget = 20;
    p.mu = 0;
    p.tau = 0;
    p.epsilon = 1;
    p.theta = 10;
    const AllocationPlan plan = allocate(stats, p);
    REQUIRE(plan.centroids_per_token.size() == 3);
    CHECK(plan.centroids_per_token[0] == 9);
    CHECK(plan.centroids_per_token[1] == 3);
    CHECK(plan.centroids_per_token[2] == 8);
    CHECK(plan.total_allocated == 20);
    CHECK(plan.shortfall == 0);
    CHECK(plan.surplus == 0);
    CHECK(plan.active_count == 3);

    CHECK(speedup_lower_bound(stats) == doctest::Approx(2.248).epsilon(1e-3));
}

TEST_CASE("single-token allocation takes the whole budget") {
    std::vector<TokenStats> stats = {make_stats(0, 10000, 50.0)};
    AllocationParams p;
    p.budget = 64;
    p.mu = 0;
    p.tau = 0;
    p.epsilon = 1;
    p.theta = 1;
    const AllocationPlan plan = allocate(stats, p);
    CHECK(plan.centroids_per_token[0] == 64);
    CHECK(plan.total_allocated == 64);
    CHECK(speedup_lower_bound(stats) == doctest::Approx(1.0));
}

TEST_CASE("equal weights give bound equal to the token count") {
    std::vector<TokenStats> stats;
    for (TokenId t = 0; t < 7; ++t) stats.push_back(make_stats(t, 500, 3.25));
    CHECK(speedup_lower_bound(stats) == doctest::Approx(7.0));
}

TEST_CASE("all-zero weights make the bound undefined") {
    std::vector<TokenStats> stats = {make_stats(0, 500, 0.0), make_stats(1, 600, 0.0)};
    CHECK_THROWS_AS(speedup_lower_bound(stats), ZeroWeightError);
}

TEST_CASE("reference thresholds are stored in the plan") {
    std::vector<TokenStats> stats;
    for (TokenId t = 0; t < 4; ++t) stats.push_back(make_stats(t, 2000, 10.0 + t));
    AllocationParams p;
    p.budget = 40;  // defaults mu=128 tau=256 epsilon=4 theta=39
    const AllocationPlan plan = allocate(stats, p);
    CHECK(plan.params.mu == 128);
    CHECK(plan.params.tau == 256);
    CHECK(plan.params.epsilon == 4);
    CHECK(plan.params.theta == 39);
    CHECK(plan.total_allocated == 40);
}

TEST_CASE("tail handling: micro gets one centroid, small gets two") {
    std::vector<TokenStats> stats = {
        make_stats(0, 100, 5.0),   // micro: n < 128
        make_stats(1, 200, 5.0),   // small: 128 <= n < 256
        make_stats(2, 5000, 5.0),  // active
    };
    AllocationParams p;
    p.budget = 30;
    const AllocationPlan plan = allocate(stats, p);
    CHECK(plan.category[0] == TokenCategory::kMicro);
    CHECK(plan.category[1] == TokenCategory::kSmall);
    CHECK(plan.category[2] == TokenCategory::kActive);
    CHECK(plan.centroids_per_token[0] == 1);
    CHECK(plan.centroids_per_token[1] == 2);
    CHECK(plan.centroids_per_token[2] == 27);
    CHECK(plan.micro_count == 1);
    CHECK(plan.small_count == 1);
    CHECK(plan.active_count == 1);
}

TEST_CASE("budget below the token count is infeasible") {
    std::vector<TokenStats> stats;
    for (TokenId t = 0; t < 10; ++t) stats.push_back(make_stats(t, 50, 1.0));
    AllocationParams p;
    p.budget = 9;
    CHECK_THROWS_AS(allocate(stats, p), InfeasibleBudgetError);
}

TEST_CASE("theta caps produce an explicit shortfall") {
    // Two active tokens, each capped at n/theta = 3 centroids, budget 20.
    std::vector<TokenStats> stats = {make_stats(0, 300, 9.0), make_stats(1, 390, 8.0)};
    AllocationParams p;
    p.budget = 20;
    p.mu = 0;
    p.tau = 0;
    p.epsilon = 1;
    p.theta = 100;
    const AllocationPlan plan = allocate(stats, p);
    CHECK(plan.centroids_per_token[0] == 3);
    CHECK(plan.centroids_per_token[1] == 3);
    CHECK(plan.total_allocated == 6);
    CHECK(plan.shortfall == 14);
}

TEST_CASE("epsilon floors can overshoot the budget") {
    // Pinned tokens: n/theta < epsilon so every token sits at min(eps, n).
    std::vector<TokenStats> stats;
    for (TokenId t = 0; t < 6; ++t) stats.push_back(make_stats(t, 300, 2.0));
    AllocationParams p;
    p.budget = 12;
    p.mu = 0;
    p.tau = 0;
    p.epsilon = 4;
    p.theta = 1000;
    const AllocationPlan plan = allocate(stats, p);
    for (int t = 0; t < 6; ++t) CHECK(plan.centroids_per_token[t] == 4);
    CHECK(plan.total_allocated == 24);
    CHECK(plan.surplus == 12);
}

TEST_CASE("allocation never exceeds token occurrence counts") {
    std::vector<TokenStats> stats = {make_stats(0, 260, 100.0), make_stats(1, 5000, 1.0)};
    AllocationParams p;
    p.budget = 600;
    p.mu = 0;
    p.tau = 0;
    p.epsilon = 1;
    p.theta = 1;
    const AllocationPlan plan = allocate(stats, p);
    CHECK(plan.centroids_per_token[0] <= 260);
    CHECK(plan.centroids_per_token[1] <= 5000);
    CHECK(plan.total_allocated == 600);
}

TEST_CASE("randomized plans match the literal reference allocator") {
    std::mt19937_64 rng(4242);
    for (int trial = 0; trial < 40; ++trial) {
        std::uniform_int_distribution<int> ntok_dist(1, 60);
        const int ntok = ntok_dist(rng);
        std::vector<TokenStats> stats;
        std::uniform_int_distribution<std::uint64_t> count_dist(1, 4000);
        std::uniform_real_distribution<double> spread_dist(0.0, 3.0);
        for (TokenId t = 0; t < TokenId(ntok); ++t) {
            const std::uint64_t n = count_dist(rng);
            stats.push_back(make_stats(t, n, std::sqrt(double(n)) * spread_dist(rng)));
        }
        AllocationParams p;
        p.mu = std::uniform_int_distribution<std::uint64_t>(0, 300)(rng);
        p.tau = p.mu + std::uniform_int_distribution<std::uint64_t>(0, 300)(rng);
        p.epsilon = std::uniform_int_distribution<std::uint32_t>(1, 8)(rng);
        p.theta = std::uniform_int_distribution<std::uint64_t>(1, 100)(rng);
        p.budget = std::uniform_int_distribution<std::uint64_t>(ntok, 2000)(rng);

        const AllocationPlan plan = allocate(stats, p);
        const oracle::BruteAllocation ref = oracle::brute_allocate(stats, p);
        REQUIRE(plan.centroids_per_token.size() == ref.kappa.size());
        for (std::size_t j = 0; j < ref.kappa.size(); ++j) {
            CHECK(plan.centroids_per_token[j] == ref.kappa[j]);
        }
        CHECK(plan.total_allocated == ref.total);
        if (plan.shortfall == 0 && plan.surplus == 0) {
            CHECK(plan.total_allocated == p.budget);
        }
    }
}

TEST_CASE("per-token seeds are deterministic and distinct") {
    CHECK(token_seed(42, 7) == token_seed(42, 7));
    CHECK(token_seed(42, 7) != token_seed(42, 8));
    CHECK(token_seed(42, 7) != token_seed(43, 7));
}

TEST_CASE("row sampling is capped, sorted and deterministic") {
    std::vector<std::uint64_t> rows;
    for (std::uint64_t r = 0; r < 500; ++r) rows.push_back(r * 3);
    const auto all = sample_rows(rows.data(), rows.size(), 1000, 9);
    CHECK(all.size() == 500);
    const auto some = sample_rows(rows.data(), rows.size(), 100, 9);
    const auto again = sample_rows(rows.data(), rows.size(), 100, 9);
    REQUIRE(some.size() == 100);
    CHECK(some == again);
    CHECK(std::is_sorted(some.begin(), some.end()));
    for (std::size_t i = 1; i < some.size(); ++i) CHECK(some[i] != some[i - 1]);
    for (std::uint64_t r : some) CHECK(r % 3 == 0);
}
