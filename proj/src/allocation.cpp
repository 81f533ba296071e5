#include "mvr/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <random>

namespace mvr {

TokenIndex build_token_index(const TokenVectorCorpus& corpus) {
    TokenIndex idx;
    idx.offsets.assign(corpus.vocab_size + 1, 0);
    for (TokenId t : corpus.token_ids) idx.offsets[t + 1]++;
    for (std::size_t t = 0; t < corpus.vocab_size; ++t) idx.offsets[t + 1] += idx.offsets[t];
    idx.rows.resize(corpus.num_vectors());
    std::vector<std::uint64_t> cursor(idx.offsets.begin(), idx.offsets.end() - 1);
    for (std::uint64_t i = 0; i < corpus.num_vectors(); ++i) {
        idx.rows[cursor[corpus.token_ids[i]]++] = i;
    }
    return idx;
}

std::uint64_t token_seed(std::uint64_t global_seed, TokenId token) {
    std::uint64_t z = global_seed + 0x9e3779b97f4a7c15ull * (std::uint64_t(token) + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Seeded uniform sample without replacement, returned sorted ascending.
std::vector<std::uint64_t> sample_rows(const std::uint64_t* rows, std::uint64_t n,
                                       std::uint64_t cap, std::uint64_t seed) {
    if (n <= cap) return std::vector<std::uint64_t>(rows, rows + n);
    std::vector<std::uint64_t> pool(rows, rows + n);
    std::mt19937_64 rng(seed);
    for (std::uint64_t i = 0; i < cap; ++i) {
        std::uniform_int_distribution<std::uint64_t> pick(i, n - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(cap);
    std::sort(pool.begin(), pool.end());
    return pool;
}

std::vector<TokenStats> compute_token_stats(const TokenVectorCorpus& corpus,
                                            const TokenIndex& index,
                                            std::uint64_t sample_cap, std::uint64_t seed) {
    if (sample_cap == 0) throw UsageError("compute_token_stats: sample_cap must be >= 1");
    std::vector<TokenStats> stats;
    const std::uint32_t dim = corpus.dim;
    std::vector<double> mean_acc(dim);
    for (TokenId t = 0; t < corpus.vocab_size; ++t) {
        const std::uint64_t n = index.count(t);
        if (n == 0) continue;
        TokenStats ts;
        ts.token_id = t;
        ts.count = n;
        const auto sample =
            sample_rows(index.rows_of(t), n, sample_cap, token_seed(seed, t));
        const std::uint64_t m = sample.size();

        std::fill(mean_acc.begin(), mean_acc.end(), 0.0);
        for (std::uint64_t r : sample) {
            const float* v = corpus.row(r);
            for (std::uint32_t k = 0; k < dim; ++k) mean_acc[k] += v[k];
        }
        ts.mean.resize(dim);
        for (std::uint32_t k = 0; k < dim; ++k) {
            mean_acc[k] /= double(m);
            ts.mean[k] = static_cast<float>(mean_acc[k]);
        }
        double sq = 0.0;
        for (std::uint64_t r : sample) {
            const float* v = corpus.row(r);
            for (std::uint32_t k = 0; k < dim; ++k) {
                const double d = double(v[k]) - mean_acc[k];
                sq += d * d;
            }
        }
        ts.spread = static_cast<float>(sq / double(m));
        ts.weight = std::sqrt(double(n)) * double(ts.spread);
        stats.push_back(std::move(ts));
    }
    return stats;
}

AllocationPlan allocate(const std::vector<TokenStats>& stats, const AllocationParams& params) {
    if (stats.empty()) throw UsageError("allocate: no tokens");
    if (params.mu > params.tau) throw UsageError("allocate: mu must be <= tau");
    if (params.epsilon < 1) throw UsageError("allocate: epsilon must be >= 1");
    if (params.theta < 1) throw UsageError("allocate: theta must be >= 1");
    if (params.budget < stats.size()) {
        throw InfeasibleBudgetError("allocate: budget " + std::to_string(params.budget) +
                                    " is below the token count " +
                                    std::to_string(stats.size()));
    }

    const std::size_t nt = stats.size();
    AllocationPlan plan;
    plan.params = params;
    plan.category.resize(nt);
    plan.centroids_per_token.assign(nt, 0);

    // Phase 1: tail handling.
    std::vector<std::size_t> active;
    std::uint64_t tail_total = 0;
    for (std::size_t j = 0; j < nt; ++j) {
        const std::uint64_t n = stats[j].count;
        if (n < params.mu) {
            plan.category[j] = TokenCategory::kMicro;
            plan.centroids_per_token[j] = 1;
            plan.micro_count++;
        } else if (n < params.tau) {
            plan.category[j] = TokenCategory::kSmall;
            plan.centroids_per_token[j] =
                static_cast<std::uint32_t>(std::min<std::uint64_t>(2, n));
            plan.small_count++;
        } else {
            plan.category[j] = TokenCategory::kActive;
            active.push_back(j);
            plan.active_count++;
            continue;
        }
        tail_total += plan.centroids_per_token[j];
    }

    const std::uint64_t remaining =
        params.budget > tail_total ? params.budget - tail_total : 0;

    // Phase 2: damped scoring over active tokens.
    double weight_sum = 0.0;
    for (std::size_t j : active) weight_sum += stats[j].weight;
    std::vector<double> fraction(nt, 0.0);
    for (std::size_t j : active) {
        double share;
        if (weight_sum > 0.0) {
            share = stats[j].weight / weight_sum * double(remaining);
        } else {
            // Degenerate corpus where every active token has zero spread:
            // split the remaining budget evenly.
            share = double(remaining) / double(active.size());
        }
        const double fl = std::floor(share);
        plan.centroids_per_token[j] = static_cast<std::uint32_t>(fl);
        fraction[j] = share - fl;
    }

    // Phase 3: bounding. Tokens whose theta-cap undercuts the epsilon floor
    // are pinned at min(epsilon, n).
    std::vector<std::uint32_t> lower(nt, 0), upper(nt, 0);
    for (std::size_t j : active) {
        const std::uint64_t n = stats[j].count;
        const std::uint64_t theta_cap = n / params.theta;
        if (theta_cap < params.epsilon) {
            const auto pinned =
                static_cast<std::uint32_t>(std::min<std::uint64_t>(params.epsilon, n));
            lower[j] = upper[j] = pinned;
        } else {
            lower[j] = params.epsilon;
            upper[j] = static_cast<std::uint32_t>(std::min<std::uint64_t>(n, theta_cap));
        }
        plan.centroids_per_token[j] =
            std::clamp(plan.centroids_per_token[j], lower[j], upper[j]);
    }

    std::uint64_t total = 0;
    for (std::size_t j = 0; j < nt; ++j) total += plan.centroids_per_token[j];

    // Phase 4: reconciliation, active tokens only.
    if (total < params.budget) {
        std::vector<std::size_t> order(active);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (fraction[a] != fraction[b]) return fraction[a] > fraction[b];
            return stats[a].token_id < stats[b].token_id;
        });
        bool moved = true;
        while (total < params.budget && moved) {
            moved = false;
            for (std::size_t j : order) {
                if (total == params.budget) break;
                if (plan.centroids_per_token[j] < upper[j]) {
                    plan.centroids_per_token[j]++;
                    total++;
                    moved = true;
                }
            }
        }
        plan.shortfall = params.budget - total;
    } else if (total > params.budget) {
        // Smallest weight-per-centroid loses first; the ratio is refreshed
        // after every removal (waterfilling).
        using Entry = std::pair<double, std::size_t>;  // (w/kappa, stats index)
        auto cmp = [&](const Entry& a, const Entry& b) {
            if (a.first != b.first) return a.first > b.first;
            return stats[a.second].token_id > stats[b.second].token_id;
        };
        std::priority_queue<Entry, std::vector<Entry>, decltype(cmp)> heap(cmp);
        for (std::size_t j : active) {
            if (plan.centroids_per_token[j] > lower[j]) {
                heap.push({stats[j].weight / double(plan.centroids_per_token[j]), j});
            }
        }
        while (total > params.budget && !heap.empty()) {
            const auto [ratio, j] = heap.top();
            heap.pop();
            const double current = stats[j].weight / double(plan.centroids_per_token[j]);
            if (current != ratio) continue;  // stale entry
            plan.centroids_per_token[j]--;
            total--;
            if (plan.centroids_per_token[j] > lower[j]) {
                heap.push({stats[j].weight / double(plan.centroids_per_token[j]), j});
            }
        }
        plan.surplus = total - params.budget;
    }

    plan.total_allocated = total;
    return plan;
}

double speedup_lower_bound(const std::vector<TokenStats>& stats) {
    double sum = 0.0, maxw = 0.0;
    for (const auto& ts : stats) {
        sum += ts.weight;
        maxw = std::max(maxw, ts.weight);
    }
    if (maxw <= 0.0) {
        throw ZeroWeightError("speedup_lower_bound: every token weight is zero");
    }
    return sum / maxw;
}

}  // namespace mvr
