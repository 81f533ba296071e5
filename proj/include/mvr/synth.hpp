#pragma once

#include <cstdint>

#include "mvr/corpus.hpp"

namespace mvr {

// Seeded generator for the desk-scale testbed: Zipfian token frequencies,
// per-token Gaussian mixtures on the unit sphere, optional planted topic
// groups with matching queries and qrels.
struct SynthParams {
    std::uint64_t seed = 0;
    std::uint32_t dim = 32;
    std::uint32_t vocab_size = 1000;
    std::uint64_t num_docs = 1000;
    std::uint32_t doc_len_min = 16;
    std::uint32_t doc_len_max = 48;
    double zipf_exponent = 1.2;
    std::uint32_t components_per_token = 4;
    float noise = 0.05f;  // component jitter before renormalization

    // Planted topics: the first num_queries * group_size documents form
    // groups sharing query_len topic vectors; document r of a group gets
    // jitter growing with r, so within-group ranking is well separated.
    // group_size 0 plants nothing and queries perturb random documents.
    std::uint32_t num_queries = 20;
    std::uint32_t query_len = 8;
    std::uint32_t group_size = 0;
    float query_noise = 0.02f;
};

struct SynthOutput {
    TokenVectorCorpus corpus;
    QuerySet queries;
    Qrels qrels;
};

SynthOutput synthesize(const SynthParams& params);

}  // namespace mvr
