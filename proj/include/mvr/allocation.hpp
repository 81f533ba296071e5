#pragma once

#include <cstdint>
#include <vector>

#include "mvr/common.hpp"
#include "mvr/corpus.hpp"

namespace mvr {

// Row indices grouped by token id (stable within each token), shared by
// stats, training and assignment.
struct TokenIndex {
    std::vector<std::uint64_t> offsets;  // vocab_size + 1
    std::vector<std::uint64_t> rows;     // corpus row indices, grouped by token

    std::uint64_t count(TokenId t) const { return offsets[t + 1] - offsets[t]; }
    const std::uint64_t* rows_of(TokenId t) const { return rows.data() + offsets[t]; }
};

TokenIndex build_token_index(const TokenVectorCorpus& corpus);

// Per-token frequency, mean embedding, spread (mean squared distance to the
// mean) and damped weight sqrt(n) * spread. Only tokens present in the
// corpus get an entry.
struct TokenStats {
    TokenId token_id = 0;
    std::uint64_t count = 0;      // exact, even when mean/spread are sampled
    std::vector<float> mean;
    float spread = 0.0f;
    double weight = 0.0;
};

// When a token occurs more than sample_cap times, mean and spread are
// estimated on a seeded uniform sample of sample_cap occurrences.
std::vector<TokenStats> compute_token_stats(const TokenVectorCorpus& corpus,
                                            const TokenIndex& index,
                                            std::uint64_t sample_cap = 1ull << 18,
                                            std::uint64_t seed = 0);

enum class TokenCategory : std::uint8_t { kMicro, kSmall, kActive };

struct AllocationParams {
    std::uint64_t budget = 0;    // total centroids to hand out
    std::uint64_t mu = 128;      // below: micro (1 centroid)
    std::uint64_t tau = 256;     // below: small (2 centroids)
    std::uint32_t epsilon = 4;   // hard floor for active tokens
    std::uint64_t theta = 39;    // min average vectors per centroid
};

struct AllocationPlan {
    AllocationParams params;
    std::vector<TokenCategory> category;          // aligned with the stats list
    std::vector<std::uint32_t> centroids_per_token;
    std::uint64_t total_allocated = 0;
    std::uint64_t micro_count = 0;
    std::uint64_t small_count = 0;
    std::uint64_t active_count = 0;
    // Nonzero when the bounds make the budget unreachable: shortfall means
    // every eligible token hit its upper bound with budget left over,
    // surplus means the floors alone exceed the budget.
    std::uint64_t shortfall = 0;
    std::uint64_t surplus = 0;
};

// Four-phase budget allocation:
//   1. tail handling: micro tokens get 1 centroid, small tokens 2;
//   2. damped scoring: active token j gets floor(w_j / sum(w) * B) where B
//      is the budget left after tail handling;
//   3. bounding: active allocations clamped to [epsilon, floor(n_j/theta)]
//      and never above n_j; when floor(n_j/theta) < epsilon the floor wins
//      and the token is pinned at min(epsilon, n_j);
//   4. reconciliation: surplus handed out by largest fractional remainder,
//      deficit removed from the smallest w_j/kappa_j, active tokens only,
//      repeated until the total matches the budget or no token can move.
AllocationPlan allocate(const std::vector<TokenStats>& stats, const AllocationParams& params);

// Lower bound on the training speedup of per-token clustering over flat
// clustering with the same budget: sum(w) / max(w).
double speedup_lower_bound(const std::vector<TokenStats>& stats);

// Deterministic per-token seed derivation (splitmix64 over the pair), so
// results do not depend on scheduling order.
std::uint64_t token_seed(std::uint64_t global_seed, TokenId token);

// Seeded uniform sample without replacement, sorted ascending; returns all
// rows when n <= cap.
std::vector<std::uint64_t> sample_rows(const std::uint64_t* rows, std::uint64_t n,
                                       std::uint64_t cap, std::uint64_t seed);

}  // namespace mvr
