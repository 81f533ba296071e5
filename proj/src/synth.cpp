#include "mvr/synth.hpp"

#include <cmath>
#include <random>

#include "mvr/common.hpp"

namespace mvr {

namespace {

void renorm(float* v, std::uint32_t dim) {
    double s = 0.0;
    for (std::uint32_t d = 0; d < dim; ++d) s += double(v[d]) * v[d];
    const float inv = s > 0.0 ? static_cast<float>(1.0 / std::sqrt(s)) : 0.0f;
    for (std::uint32_t d = 0; d < dim; ++d) v[d] *= inv;
}

void validate(const SynthParams& p) {
    if (p.dim == 0 || p.vocab_size == 0 || p.num_docs == 0) {
        throw UsageError("synth: dim, vocab_size and num_docs must be positive");
    }
    if (p.doc_len_min == 0 || p.doc_len_min > p.doc_len_max) {
        throw UsageError("synth: need 1 <= doc_len_min <= doc_len_max");
    }
    if (p.components_per_token == 0) {
        throw UsageError("synth: components_per_token must be >= 1");
    }
    if (!(p.zipf_exponent > 0.0)) {
        throw UsageError("synth: zipf_exponent must be positive");
    }
    if (p.num_queries > 0 && p.query_len == 0) {
        throw UsageError("synth: query_len must be >= 1");
    }
    if (std::uint64_t(p.group_size) * p.num_queries > p.num_docs) {
        throw UsageError("synth: planted groups need group_size * num_queries <= num_docs");
    }
}

}  // namespace

SynthOutput synthesize(const SynthParams& p) {
    validate(p);
    std::mt19937_64 rng(p.seed);
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    std::uniform_int_distribution<std::uint32_t> pick_component(
        0, p.components_per_token - 1);
    std::uniform_int_distribution<std::uint32_t> pick_len(p.doc_len_min, p.doc_len_max);

    std::vector<double> zipf_weights(p.vocab_size);
    for (std::uint32_t t = 0; t < p.vocab_size; ++t) {
        zipf_weights[t] = std::pow(double(t) + 1.0, -p.zipf_exponent);
    }
    std::discrete_distribution<std::uint32_t> zipf(zipf_weights.begin(),
                                                   zipf_weights.end());

    std::vector<float> components(std::uint64_t(p.vocab_size) * p.components_per_token *
                                  p.dim);
    for (std::uint64_t i = 0; i < components.size(); ++i) components[i] = gauss(rng);
    for (std::uint64_t r = 0; r < components.size() / p.dim; ++r) {
        renorm(components.data() + r * p.dim, p.dim);
    }
    const auto component_of = [&](TokenId t, std::uint32_t g) {
        return components.data() +
               (std::uint64_t(t) * p.components_per_token + g) * p.dim;
    };

    SynthOutput out;
    out.corpus.dim = p.dim;
    out.corpus.vocab_size = p.vocab_size;
    out.corpus.doc_offsets.push_back(0);
    out.queries.dim = p.dim;
    out.queries.offsets.push_back(0);

    std::vector<float> vec(p.dim);
    const auto emit_token = [&](TokenId t, std::uint32_t g, float sigma) {
        const float* base = component_of(t, g);
        for (std::uint32_t d = 0; d < p.dim; ++d) vec[d] = base[d] + sigma * gauss(rng);
        renorm(vec.data(), p.dim);
        out.corpus.token_ids.push_back(t);
        out.corpus.vectors.insert(out.corpus.vectors.end(), vec.begin(), vec.end());
    };

    const std::uint32_t num_groups = p.group_size > 0 ? p.num_queries : 0;
    std::vector<TokenId> core_tokens(std::uint64_t(num_groups) * p.query_len);
    std::vector<std::uint32_t> core_comps(core_tokens.size());
    for (std::uint64_t i = 0; i < core_tokens.size(); ++i) {
        core_tokens[i] = zipf(rng);
        core_comps[i] = pick_component(rng);
    }

    for (std::uint64_t d = 0; d < p.num_docs; ++d) {
        std::uint32_t len = pick_len(rng);
        if (d < std::uint64_t(num_groups) * p.group_size) {
            const std::uint32_t g = static_cast<std::uint32_t>(d / p.group_size);
            const std::uint32_t r = static_cast<std::uint32_t>(d % p.group_size);
            const float sigma = p.noise + 0.025f * float(r);
            len = std::max(len, p.query_len);
            for (std::uint32_t l = 0; l < p.query_len; ++l) {
                const std::uint64_t c = std::uint64_t(g) * p.query_len + l;
                emit_token(core_tokens[c], core_comps[c], sigma);
            }
            for (std::uint32_t l = p.query_len; l < len; ++l) {
                emit_token(zipf(rng), pick_component(rng), p.noise);
            }
        } else {
            for (std::uint32_t l = 0; l < len; ++l) {
                emit_token(zipf(rng), pick_component(rng), p.noise);
            }
        }
        out.corpus.doc_offsets.push_back(out.corpus.token_ids.size());
    }

    for (std::uint32_t q = 0; q < p.num_queries; ++q) {
        const std::string qid = "q" + std::to_string(q);
        if (num_groups > 0) {
            for (std::uint32_t l = 0; l < p.query_len; ++l) {
                const std::uint64_t c = std::uint64_t(q) * p.query_len + l;
                const float* base = component_of(core_tokens[c], core_comps[c]);
                for (std::uint32_t d = 0; d < p.dim; ++d) {
                    vec[d] = base[d] + p.query_noise * gauss(rng);
                }
                renorm(vec.data(), p.dim);
                out.queries.vectors.insert(out.queries.vectors.end(), vec.begin(),
                                           vec.end());
            }
            for (std::uint32_t r = 0; r < p.group_size; ++r) {
                const std::uint64_t doc = std::uint64_t(q) * p.group_size + r;
                out.qrels.judgments[qid][std::to_string(doc)] = 1;
            }
        } else {
            std::uniform_int_distribution<std::uint64_t> pick_doc(0, p.num_docs - 1);
            const std::uint64_t target = pick_doc(rng);
            const std::uint64_t begin = out.corpus.doc_offsets[target];
            const std::uint32_t take = std::min<std::uint32_t>(
                p.query_len, static_cast<std::uint32_t>(
                                 out.corpus.doc_offsets[target + 1] - begin));
            for (std::uint32_t l = 0; l < take; ++l) {
                const float* base = out.corpus.row(begin + l);
                for (std::uint32_t d = 0; d < p.dim; ++d) {
                    vec[d] = base[d] + p.query_noise * gauss(rng);
                }
                renorm(vec.data(), p.dim);
                out.queries.vectors.insert(out.queries.vectors.end(), vec.begin(),
                                           vec.end());
            }
            out.qrels.judgments[qid][std::to_string(target)] = 1;
        }
        out.queries.offsets.push_back(out.queries.vectors.size() / p.dim);
        out.queries.ids.push_back(qid);
    }
    return out;
}

}  // namespace mvr
