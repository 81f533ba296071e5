#include "mvr/index.hpp"

#include <cstring>

#include "mvr/allocation.hpp"
#include "mvr/io.hpp"

namespace mvr {

namespace {

constexpr const char* kComponents[5] = {"codebook", "codec", "compressed", "graph",
                                        "invlists"};

std::filesystem::path component_path(const std::filesystem::path& dir, const char* name) {
    return dir / (std::string(name) + ".bin");
}

// Unit-normalized nonzero residuals, sampled for codec training.
std::vector<float> residual_sample(const TokenVectorCorpus& corpus,
                                   const TokenPartitionedCodebook& codebook,
                                   const Assignment& assignment, std::uint64_t cap,
                                   std::uint64_t seed) {
    std::vector<std::uint64_t> nonzero;
    for (std::uint64_t i = 0; i < assignment.size(); ++i) {
        if (assignment.residual_norms[i] > 0.0f) nonzero.push_back(i);
    }
    const auto rows = sample_rows(nonzero.data(), nonzero.size(), cap, seed);
    std::vector<float> out(rows.size() * corpus.dim);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::uint64_t row = rows[i];
        const float* t = corpus.row(row);
        const float* c = codebook.centroid(assignment.centroid_ids[row]);
        const float rho = assignment.residual_norms[row];
        float* r = out.data() + i * corpus.dim;
        for (std::uint32_t d = 0; d < corpus.dim; ++d) r[d] = (t[d] - c[d]) / rho;
    }
    return out;
}

}  // namespace

void build_index_dir(const std::filesystem::path& dir, const TokenVectorCorpus& corpus,
                     const TokenPartitionedCodebook& codebook, const Assignment& assignment,
                     const IndexBuildParams& params) {
    namespace fs = std::filesystem;
    if (fs::exists(dir) && !fs::is_empty(dir)) {
        throw UsageError("index directory " + dir.string() + " already exists");
    }
    fs::create_directories(dir);
    try {
        PQCodec codec;
        const auto sample = residual_sample(corpus, codebook, assignment,
                                            params.pq_train_cap, params.seed);
        const std::uint64_t n_sample = sample.size() / corpus.dim;
        if (n_sample >= (1ull << params.pq_bits)) {
            codec = train_pq(sample.data(), n_sample, corpus.dim, params.pq_m,
                             params.pq_bits, params.pq_iterations, params.seed);
        } else {
            // Degenerate corpus where (almost) every vector equals its
            // centroid: an all-zero codec keeps reconstructions exact.
            codec.M = params.pq_m;
            codec.bits = params.pq_bits;
            if (corpus.dim % params.pq_m != 0) {
                throw UsageError("pq: dim " + std::to_string(corpus.dim) +
                                 " is not divisible into M = " +
                                 std::to_string(params.pq_m) + " subspaces");
            }
            codec.sub_dim = corpus.dim / params.pq_m;
            codec.codebooks.assign(
                std::uint64_t(codec.M) * codec.ksub() * codec.sub_dim, 0.0f);
        }

        const CompressedCorpus compressed = encode(corpus, assignment, codebook, codec);
        const CentroidGraph graph = build_graph(
            codebook.centroids.data(), static_cast<std::uint32_t>(codebook.num_centroids()),
            codebook.dim, params.graph_m, params.graph_ef_construction, params.seed);
        const InvertedLists lists =
            build_inverted_lists(assignment, corpus, codebook.num_centroids());

        save_codebook(codebook, component_path(dir, "codebook"));
        save_codec(codec, component_path(dir, "codec"));
        save_compressed(compressed, component_path(dir, "compressed"));
        save_graph(graph, component_path(dir, "graph"));
        save_inverted_lists(lists, component_path(dir, "invlists"));

        std::vector<std::pair<std::string, std::string>> kv;
        kv.emplace_back("format", "mvr-index");
        kv.emplace_back("version", "1");
        kv.emplace_back("dim", std::to_string(codebook.dim));
        kv.emplace_back("vocab_size", std::to_string(codebook.vocab_size));
        kv.emplace_back("centroids", std::to_string(codebook.num_centroids()));
        kv.emplace_back("docs", std::to_string(compressed.num_docs()));
        kv.emplace_back("tokens", std::to_string(compressed.num_tokens()));
        kv.emplace_back("pq_m", std::to_string(params.pq_m));
        kv.emplace_back("pq_bits", std::to_string(params.pq_bits));
        kv.emplace_back("pq_iterations", std::to_string(params.pq_iterations));
        kv.emplace_back("pq_train_cap", std::to_string(params.pq_train_cap));
        kv.emplace_back("graph_m", std::to_string(params.graph_m));
        kv.emplace_back("graph_ef_construction",
                        std::to_string(params.graph_ef_construction));
        kv.emplace_back("seed", std::to_string(params.seed));
        for (const char* name : kComponents) {
            kv.emplace_back(std::string(name) + "_file", std::string(name) + ".bin");
            kv.emplace_back(std::string(name) + "_hash",
                            io::hash_hex(io::fnv1a_file(component_path(dir, name))));
        }
        io::write_kv_file(dir / "manifest.txt", kv);
    } catch (...) {
        std::error_code ec;
        fs::remove_all(dir, ec);
        throw;
    }
}

SearchIndex load_index_dir(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.txt";
    const auto kv = io::read_kv_file(manifest_path);
    const std::string what = "index manifest " + manifest_path.string();
    if (io::require_key(kv, "format", what) != "mvr-index") {
        throw FormatError(what + ": not an index manifest");
    }
    for (const char* name : kComponents) {
        const auto file = io::require_key(kv, std::string(name) + "_file", what);
        const auto want = io::require_key(kv, std::string(name) + "_hash", what);
        const auto have = io::hash_hex(io::fnv1a_file(dir / file));
        if (want != have) {
            throw HashMismatchError("index component " + file + ": recorded hash " + want +
                                    ", found " + have);
        }
    }

    SearchIndex index;
    index.codebook = load_codebook(dir / io::require_key(kv, "codebook_file", what));
    index.codec = load_codec(dir / io::require_key(kv, "codec_file", what));
    index.compressed = load_compressed(dir / io::require_key(kv, "compressed_file", what));
    index.graph = load_graph(dir / io::require_key(kv, "graph_file", what));
    index.lists = load_inverted_lists(dir / io::require_key(kv, "invlists_file", what));
    index.params.pq_m = static_cast<std::uint32_t>(io::require_u64(kv, "pq_m", what));
    index.params.pq_bits = static_cast<std::uint32_t>(io::require_u64(kv, "pq_bits", what));
    index.params.pq_iterations =
        static_cast<std::uint32_t>(io::require_u64(kv, "pq_iterations", what));
    index.params.pq_train_cap = io::require_u64(kv, "pq_train_cap", what);
    index.params.graph_m = static_cast<std::uint32_t>(io::require_u64(kv, "graph_m", what));
    index.params.graph_ef_construction =
        static_cast<std::uint32_t>(io::require_u64(kv, "graph_ef_construction", what));
    index.params.seed = io::require_u64(kv, "seed", what);

    const std::uint64_t centroids = index.codebook.num_centroids();
    if (index.graph.num_nodes() != centroids || index.lists.num_centroids() != centroids) {
        throw DataError(what + ": centroid counts disagree across components");
    }
    if (index.codec.dim() != index.codebook.dim) {
        throw DataError(what + ": codec dim does not match the codebook");
    }
    if (index.compressed.M != index.codec.M) {
        throw DataError(what + ": compressed corpus and codec disagree on M");
    }
    for (CentroidId c : index.compressed.centroid_ids) {
        if (c >= centroids) {
            throw DataError(what + ": compressed corpus references centroid " +
                            std::to_string(c) + " of " + std::to_string(centroids));
        }
    }
    return index;
}

}  // namespace mvr
