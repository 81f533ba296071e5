#include "mvr/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>

#include "mvr/kmeans.hpp"

namespace mvr {

namespace {

void validate_params(const SearchParams& p) {
    if (p.kappa_c < 1) throw UsageError("search: kappa_c must be >= 1");
    if (p.k < 1) throw UsageError("search: k must be >= 1");
    if (p.kappa_d < p.k) throw UsageError("search: kappa_d must be >= k");
    if (!(p.alpha > 0.0f) || p.alpha > 1.0f) {
        throw UsageError("search: alpha must be in (0, 1]");
    }
}

std::uint64_t elapsed_us(std::chrono::steady_clock::time_point a,
                         std::chrono::steady_clock::time_point b) {
    return std::chrono::duration_cast<std::chrono::microseconds>(b - a).count();
}

}  // namespace

CandidateSet gather(const float* query, std::uint32_t n_q, const SearchIndex& index,
                    const SearchParams& params, GraphSearchScratch* scratch,
                    std::uint64_t* dot_ops) {
    struct Acc {
        float sum;           // flushed contributions of earlier tokens
        float cur;           // best centroid similarity for the current token
        std::uint32_t last;  // token that wrote cur
    };
    std::unordered_map<DocId, Acc> acc;
    const std::uint32_t count = static_cast<std::uint32_t>(index.codebook.num_centroids());
    const std::uint32_t kc = std::min(params.kappa_c, count);
    GraphSearchScratch local;
    GraphSearchScratch& s = scratch ? *scratch : local;
    const std::uint64_t dots_before = s.dots;
    std::uint64_t exhaustive_dots = 0;

    for (std::uint32_t i = 0; i < n_q; ++i) {
        const float* q = query + std::uint64_t(i) * index.codebook.dim;
        const std::vector<ScoredId> tops =
            params.exhaustive_centroids
                ? exhaustive_centroids(index.codebook.centroids.data(), count,
                                       index.codebook.dim, q, kc, &exhaustive_dots)
                : search_centroids(index.graph, index.codebook.centroids.data(), q, kc,
                                   params.ef_search, &s);
        for (const ScoredId& top : tops) {
            const DocId* list = index.lists.list_of(top.id);
            const std::uint64_t len = index.lists.count(top.id);
            for (std::uint64_t p = 0; p < len; ++p) {
                auto [it, inserted] = acc.try_emplace(list[p], Acc{0.0f, top.score, i});
                if (inserted) continue;
                Acc& e = it->second;
                if (e.last != i) {
                    e.sum += e.cur;
                    e.cur = top.score;
                    e.last = i;
                } else if (top.score > e.cur) {
                    e.cur = top.score;
                }
            }
        }
    }

    if (dot_ops) *dot_ops += (s.dots - dots_before) + exhaustive_dots;
    CandidateSet out;
    out.reserve(acc.size());
    for (const auto& [doc, e] : acc) out.emplace(doc, e.sum + e.cur);
    return out;
}

std::vector<ScoredDoc> truncate_and_prune(const CandidateSet& candidates,
                                          std::uint32_t kappa_d, float alpha) {
    std::vector<ScoredDoc> ordered;
    ordered.reserve(candidates.size());
    for (const auto& [doc, score] : candidates) ordered.push_back({doc, score});
    std::sort(ordered.begin(), ordered.end());
    if (ordered.size() > kappa_d) ordered.resize(kappa_d);
    if (ordered.empty()) return ordered;
    const float threshold = alpha * ordered.front().score;
    std::size_t keep = ordered.size();
    while (keep > 0 && ordered[keep - 1].score < threshold) --keep;
    ordered.resize(keep);
    return ordered;
}

std::vector<ScoredDoc> refine(const float* query, std::uint32_t n_q,
                              const std::vector<ScoredDoc>& candidates,
                              const SearchIndex& index, std::uint32_t k,
                              std::uint64_t* dot_ops, std::uint64_t* lookup_ops) {
    const DistanceTables tables = build_distance_tables(query, n_q, index.codec);
    const std::uint32_t dim = index.codebook.dim;
    std::vector<float> cent_rows;
    std::vector<float> cent_scores;
    std::vector<float> token_scores;
    std::vector<ScoredDoc> scored;
    scored.reserve(candidates.size());

    for (const ScoredDoc& cand : candidates) {
        const DocId d = cand.doc;
        const std::uint32_t n_d = index.compressed.doc_len(d);
        const CentroidId* ids = index.compressed.ids_of(d);
        if (dot_ops) *dot_ops += std::uint64_t(n_q) * n_d;
        if (lookup_ops) *lookup_ops += std::uint64_t(n_q) * n_d * index.codec.M;
        cent_rows.resize(std::uint64_t(n_d) * dim);
        cent_scores.resize(std::uint64_t(n_q) * n_d);
        token_scores.resize(std::uint64_t(n_q) * n_d);
        for (std::uint32_t j = 0; j < n_d; ++j) {
            std::memcpy(cent_rows.data() + std::uint64_t(j) * dim,
                        index.codebook.centroid(ids[j]), dim * sizeof(float));
        }
        dot_products(query, n_q, cent_rows.data(), n_d, dim, cent_scores.data());
        try {
            score_tokens(index.compressed.codes_of(d), index.compressed.norms_of(d), n_d,
                         tables, cent_scores.data(), token_scores.data());
        } catch (const CorruptRecordError& e) {
            throw CorruptRecordError("document " + std::to_string(d) + ": " + e.what());
        }
        float total = 0.0f;
        for (std::uint32_t i = 0; i < n_q; ++i) {
            const float* row = token_scores.data() + std::uint64_t(i) * n_d;
            float best = row[0];
            for (std::uint32_t j = 1; j < n_d; ++j) best = std::max(best, row[j]);
            total += best;
        }
        scored.push_back({d, total});
    }
    std::sort(scored.begin(), scored.end());
    if (scored.size() > k) scored.resize(k);
    return scored;
}

SearchResult search(const float* query, std::uint32_t n_q, const SearchIndex& index,
                    const SearchParams& params, GraphSearchScratch* scratch) {
    validate_params(params);
    SearchResult res;
    const auto t0 = std::chrono::steady_clock::now();
    const CandidateSet candidates =
        gather(query, n_q, index, params, scratch, &res.timings.gather_dot_ops);
    const auto t1 = std::chrono::steady_clock::now();
    const std::vector<ScoredDoc> pruned =
        truncate_and_prune(candidates, params.kappa_d, params.alpha);
    const auto t2 = std::chrono::steady_clock::now();
    res.ranking = refine(query, n_q, pruned, index, params.k, &res.timings.refine_dot_ops,
                         &res.timings.table_lookup_ops);
    const auto t3 = std::chrono::steady_clock::now();
    res.timings.gather_us = elapsed_us(t0, t1);
    res.timings.prune_us = elapsed_us(t1, t2);
    res.timings.refine_us = elapsed_us(t2, t3);
    res.timings.total_us = elapsed_us(t0, t3);
    res.timings.candidates_after_gather = candidates.size();
    res.timings.candidates_after_prune = pruned.size();
    return res;
}

std::vector<ScoredDoc> exhaustive_maxsim(const float* query, std::uint32_t n_q,
                                         const TokenVectorCorpus& corpus, std::size_t k,
                                         const std::vector<DocId>* restrict_to) {
    std::vector<float> buf;
    std::vector<ScoredDoc> scored;
    const std::uint64_t num_docs = corpus.num_docs();
    const auto score_doc = [&](DocId d) {
        const std::uint32_t n_d = corpus.doc_len(d);
        buf.resize(std::uint64_t(n_q) * n_d);
        dot_products(query, n_q, corpus.row(corpus.doc_begin(d)), n_d, corpus.dim,
                     buf.data());
        float total = 0.0f;
        for (std::uint32_t i = 0; i < n_q; ++i) {
            const float* row = buf.data() + std::uint64_t(i) * n_d;
            float best = row[0];
            for (std::uint32_t j = 1; j < n_d; ++j) best = std::max(best, row[j]);
            total += best;
        }
        scored.push_back({d, total});
    };

    if (restrict_to) {
        scored.reserve(restrict_to->size());
        for (DocId d : *restrict_to) {
            if (d >= num_docs) {
                throw DataError("exhaustive_maxsim: document id " + std::to_string(d) +
                                " out of range");
            }
            score_doc(d);
        }
    } else {
        scored.reserve(num_docs);
        for (std::uint64_t d = 0; d < num_docs; ++d) score_doc(static_cast<DocId>(d));
    }
    std::sort(scored.begin(), scored.end());
    if (scored.size() > k) scored.resize(k);
    return scored;
}

}  // namespace mvr
