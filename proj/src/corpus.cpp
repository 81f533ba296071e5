#include "mvr/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mvr/io.hpp"

namespace mvr {

namespace {

constexpr char kVecMagic[8] = {'M', 'V', 'R', 'F', 'V', 'E', 'C', '1'};

void write_vector_payload(const std::filesystem::path& path, std::span<const float> data) {
    io::FileWriter w(path);
    io::write_magic(w, kVecMagic);
    w.write_u32(1);  // format version
    w.write_u32(0);  // reserved, pads the header to 16 bytes
    w.write_span(data);
    w.close();
}

std::vector<float> read_vector_payload(const std::filesystem::path& path,
                                       std::uint64_t expected_rows, std::uint32_t dim) {
    io::FileReader r(path);
    io::check_magic(r, kVecMagic, "vector payload " + path.string());
    const std::uint32_t version = r.read_u32();
    if (version != 1) {
        throw FormatError("vector payload " + path.string() + ": unsupported version");
    }
    r.read_u32();
    const std::uint64_t expected_bytes = 16 + expected_rows * dim * 4ull;
    if (r.size() != expected_bytes) {
        std::ostringstream os;
        os << "vector payload " << path.string() << ": metadata declares " << expected_rows
           << " x " << dim << " floats (" << expected_bytes << " bytes) but file has "
           << r.size() << " bytes";
        throw SizeMismatchError(os.str());
    }
    std::vector<float> data(expected_rows * dim);
    r.read_span(std::span<float>(data));
    return data;
}

void check_unit_rows(std::vector<float>& vectors, std::uint32_t dim, bool renormalize,
                     float norm_tol, const char* what) {
    const std::size_t rows = vectors.size() / dim;
    for (std::size_t i = 0; i < rows; ++i) {
        float* v = vectors.data() + i * dim;
        double n2 = 0.0;
        for (std::uint32_t k = 0; k < dim; ++k) n2 += double(v[k]) * double(v[k]);
        const double norm = std::sqrt(n2);
        if (std::abs(norm - 1.0) <= norm_tol) continue;
        if (!renormalize) {
            std::ostringstream os;
            os << what << " row " << i << " has L2 norm " << norm << ", expected 1 +/- "
               << norm_tol;
            throw DataError(os.str());
        }
        if (norm == 0.0) throw DataError(std::string(what) + " has an all-zero row");
        const float inv = static_cast<float>(1.0 / norm);
        for (std::uint32_t k = 0; k < dim; ++k) v[k] *= inv;
    }
}

std::filesystem::path sibling(const std::filesystem::path& meta_path, const std::string& rel) {
    std::filesystem::path p(rel);
    if (p.is_absolute()) return p;
    return meta_path.parent_path() / p;
}

}  // namespace

void validate_corpus(TokenVectorCorpus& corpus, bool renormalize, float norm_tol) {
    if (corpus.dim == 0) throw DataError("corpus dimension is zero");
    const std::uint64_t n = corpus.num_vectors();
    if (n == 0) throw DataError("corpus has no vectors");
    if (corpus.vectors.size() != n * corpus.dim) {
        throw SizeMismatchError("corpus vector matrix size disagrees with token_ids length");
    }
    if (corpus.doc_offsets.size() < 2) throw OffsetOrderError("doc_offsets needs >= 2 entries");
    if (corpus.doc_offsets.front() != 0) throw OffsetOrderError("doc_offsets[0] != 0");
    if (corpus.doc_offsets.back() != n) {
        throw OffsetOrderError("doc_offsets[D] does not equal the number of vectors");
    }
    for (std::size_t d = 0; d + 1 < corpus.doc_offsets.size(); ++d) {
        if (corpus.doc_offsets[d + 1] <= corpus.doc_offsets[d]) {
            throw OffsetOrderError("doc_offsets not strictly increasing at document " +
                                   std::to_string(d) + " (empty documents are forbidden)");
        }
    }
    for (std::uint64_t i = 0; i < n; ++i) {
        if (corpus.token_ids[i] >= corpus.vocab_size) {
            throw DataError("token id " + std::to_string(corpus.token_ids[i]) + " at row " +
                            std::to_string(i) + " exceeds vocabulary size " +
                            std::to_string(corpus.vocab_size));
        }
    }
    check_unit_rows(corpus.vectors, corpus.dim, renormalize, norm_tol, "corpus");
}

void validate_queries(QuerySet& queries, std::uint32_t max_query_len, bool renormalize,
                      float norm_tol) {
    if (queries.dim == 0) throw DataError("query dimension is zero");
    if (queries.offsets.size() != queries.ids.size() + 1) {
        throw SizeMismatchError("query offsets/ids length mismatch");
    }
    if (queries.offsets.front() != 0 ||
        queries.offsets.back() * queries.dim != queries.vectors.size()) {
        throw OffsetOrderError("query offsets do not cover the vector payload");
    }
    for (std::size_t q = 0; q + 1 < queries.offsets.size(); ++q) {
        const std::uint64_t len = queries.offsets[q + 1] - queries.offsets[q];
        if (queries.offsets[q + 1] < queries.offsets[q] || len == 0 || len > max_query_len) {
            throw DataError("query " + std::to_string(q) + " has " + std::to_string(len) +
                            " tokens, outside [1, " + std::to_string(max_query_len) + "]");
        }
    }
    check_unit_rows(queries.vectors, queries.dim, renormalize, norm_tol, "query set");
}

TokenVectorCorpus load_corpus(const std::filesystem::path& meta_path, bool renormalize) {
    const auto kv = io::read_kv_file(meta_path);
    const std::string what = "corpus " + meta_path.string();
    if (io::require_key(kv, "format", what) != "mvr-embeddings") {
        throw FormatError(what + ": not an mvr-embeddings metadata file");
    }
    TokenVectorCorpus c;
    c.dim = static_cast<std::uint32_t>(io::require_u64(kv, "dim", what));
    c.vocab_size = static_cast<std::uint32_t>(io::require_u64(kv, "vocab_size", what));
    const std::uint64_t n = io::require_u64(kv, "count", what);
    const std::uint64_t d = io::require_u64(kv, "docs", what);
    if (c.dim == 0 || n == 0) throw FormatError(what + ": zero dim or count");

    c.vectors = read_vector_payload(sibling(meta_path, io::require_key(kv, "vectors", what)),
                                    n, c.dim);
    c.token_ids =
        io::read_raw_array<TokenId>(sibling(meta_path, io::require_key(kv, "token_ids", what)));
    if (c.token_ids.size() != n) {
        throw SizeMismatchError(what + ": token_ids file has " +
                                std::to_string(c.token_ids.size()) + " entries, expected " +
                                std::to_string(n));
    }
    c.doc_offsets = io::read_raw_array<std::uint64_t>(
        sibling(meta_path, io::require_key(kv, "doc_offsets", what)));
    if (c.doc_offsets.size() != d + 1) {
        throw SizeMismatchError(what + ": doc_offsets file has " +
                                std::to_string(c.doc_offsets.size()) + " entries, expected " +
                                std::to_string(d + 1));
    }
    validate_corpus(c, renormalize);
    return c;
}

void save_corpus(const TokenVectorCorpus& corpus, const std::filesystem::path& meta_path) {
    const auto stem = meta_path.stem().string();
    const auto dir = meta_path.parent_path();
    const std::string vec_name = stem + ".vec";
    const std::string tok_name = stem + ".tok";
    const std::string off_name = stem + ".off";
    write_vector_payload(dir / vec_name, corpus.vectors);
    io::write_raw_array<TokenId>(dir / tok_name, corpus.token_ids);
    io::write_raw_array<std::uint64_t>(dir / off_name, corpus.doc_offsets);
    io::write_kv_file(meta_path, {
                                     {"format", "mvr-embeddings"},
                                     {"version", "1"},
                                     {"dim", std::to_string(corpus.dim)},
                                     {"count", std::to_string(corpus.num_vectors())},
                                     {"docs", std::to_string(corpus.num_docs())},
                                     {"vocab_size", std::to_string(corpus.vocab_size)},
                                     {"vectors", vec_name},
                                     {"token_ids", tok_name},
                                     {"doc_offsets", off_name},
                                 });
}

QuerySet load_queries(const std::filesystem::path& meta_path, bool renormalize,
                      std::uint32_t max_query_len) {
    const auto kv = io::read_kv_file(meta_path);
    const std::string what = "queries " + meta_path.string();
    if (io::require_key(kv, "format", what) != "mvr-queries") {
        throw FormatError(what + ": not an mvr-queries metadata file");
    }
    QuerySet qs;
    qs.dim = static_cast<std::uint32_t>(io::require_u64(kv, "dim", what));
    const std::uint64_t n = io::require_u64(kv, "count", what);
    const std::uint64_t q = io::require_u64(kv, "queries", what);
    qs.vectors = read_vector_payload(sibling(meta_path, io::require_key(kv, "vectors", what)),
                                     n, qs.dim);
    qs.offsets = io::read_raw_array<std::uint64_t>(
        sibling(meta_path, io::require_key(kv, "offsets", what)));
    if (qs.offsets.size() != q + 1) {
        throw SizeMismatchError(what + ": offsets file has " + std::to_string(qs.offsets.size()) +
                                " entries, expected " + std::to_string(q + 1));
    }

    auto ids_it = kv.find("ids");
    if (ids_it != kv.end()) {
        std::ifstream in(sibling(meta_path, ids_it->second));
        if (!in) throw DataError(what + ": cannot open ids file " + ids_it->second);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            qs.ids.push_back(line);
        }
    } else {
        for (std::uint64_t i = 0; i < q; ++i) qs.ids.push_back("q" + std::to_string(i));
    }
    if (qs.ids.size() != q) {
        throw SizeMismatchError(what + ": ids file has " + std::to_string(qs.ids.size()) +
                                " lines, expected " + std::to_string(q));
    }
    validate_queries(qs, max_query_len, renormalize);
    return qs;
}

void save_queries(const QuerySet& queries, const std::filesystem::path& meta_path) {
    const auto stem = meta_path.stem().string();
    const auto dir = meta_path.parent_path();
    const std::string vec_name = stem + ".vec";
    const std::string off_name = stem + ".off";
    const std::string ids_name = stem + ".ids";
    write_vector_payload(dir / vec_name, queries.vectors);
    io::write_raw_array<std::uint64_t>(dir / off_name, queries.offsets);
    {
        std::ofstream out(dir / ids_name);
        for (const auto& id : queries.ids) out << id << "\n";
        if (!out) throw DataError("write failed for " + (dir / ids_name).string());
    }
    io::write_kv_file(meta_path, {
                                     {"format", "mvr-queries"},
                                     {"version", "1"},
                                     {"dim", std::to_string(queries.dim)},
                                     {"count", std::to_string(queries.offsets.back())},
                                     {"queries", std::to_string(queries.num_queries())},
                                     {"vectors", vec_name},
                                     {"offsets", off_name},
                                     {"ids", ids_name},
                                 });
}

Qrels load_qrels(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open qrels " + path.string());
    Qrels qrels;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string qid, did, grade_s;
        if (!std::getline(is, qid, '\t') || !std::getline(is, did, '\t') ||
            !std::getline(is, grade_s, '\t')) {
            throw FormatError("qrels " + path.string() + " line " + std::to_string(lineno) +
                              ": expected query_id\\tdoc_id\\tgrade");
        }
        int grade = 0;
        try {
            grade = std::stoi(grade_s);
        } catch (const std::exception&) {
            throw FormatError("qrels " + path.string() + " line " + std::to_string(lineno) +
                              ": bad grade '" + grade_s + "'");
        }
        if (grade < 1) {
            throw DataError("qrels " + path.string() + " line " + std::to_string(lineno) +
                            ": relevance grade must be >= 1");
        }
        qrels.judgments[qid][did] = grade;
    }
    return qrels;
}

void save_qrels(const Qrels& qrels, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot create qrels " + path.string());
    for (const auto& [qid, docs] : qrels.judgments) {
        for (const auto& [did, grade] : docs) {
            out << qid << '\t' << did << '\t' << grade << '\n';
        }
    }
    if (!out.flush()) throw DataError("write failed for " + path.string());
}

void flag_unknown_docs(Qrels& qrels, std::uint64_t num_docs) {
    qrels.unknown_docs.clear();
    for (const auto& [qid, docs] : qrels.judgments) {
        for (const auto& [did, grade] : docs) {
            (void)grade;
            try {
                std::size_t pos = 0;
                const unsigned long long v = std::stoull(did, &pos);
                if (pos == did.size() && v < num_docs) continue;
            } catch (const std::exception&) {
            }
            qrels.unknown_docs.emplace_back(qid, did);
        }
    }
}

std::vector<std::uint64_t> token_histogram(const TokenVectorCorpus& corpus) {
    if (corpus.num_vectors() == 0) {
        throw InternalError("token_histogram on an empty corpus violates the corpus invariant");
    }
    std::vector<std::uint64_t> counts(corpus.vocab_size, 0);
    for (TokenId t : corpus.token_ids) counts[t]++;
    return counts;
}

double top_share(const std::vector<std::uint64_t>& histogram, std::size_t top_k) {
    std::vector<std::uint64_t> sorted(histogram);
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    std::uint64_t total = 0, top = 0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        total += sorted[i];
        if (i < top_k) top += sorted[i];
    }
    return total == 0 ? 0.0 : static_cast<double>(top) / static_cast<double>(total);
}

}  // namespace mvr
