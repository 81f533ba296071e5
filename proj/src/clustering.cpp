#include "mvr/clustering.hpp"

#include <atomic>
#include <cstring>
#include <mutex>
#include <thread>

#include "mvr/io.hpp"

namespace mvr {

namespace {

constexpr char kCodebookMagic[8] = {'M', 'V', 'R', 'C', 'B', 'K', '0', '1'};
constexpr char kAssignMagic[8] = {'M', 'V', 'R', 'A', 'S', 'G', '0', '1'};

// Training sample cap per token, in occurrences per requested centroid.
constexpr std::uint64_t kTrainRowsPerCentroid = 256;

std::uint32_t resolve_threads(std::uint32_t thread_count) {
    if (thread_count != 0) return thread_count;
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : hc;
}

// Runs fn(worker_id) on `threads` workers; the first failure is captured
// and rethrown as InternalError with `what` attached.
template <typename Fn>
void run_workers(std::uint32_t threads, const char* what, Fn&& fn) {
    if (threads <= 1) {
        fn(0);
        return;
    }
    std::mutex err_mutex;
    std::string first_error;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::uint32_t w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            try {
                fn(w);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (first_error.empty()) first_error = e.what();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (!first_error.empty()) {
        throw InternalError(std::string(what) + ": " + first_error);
    }
}

}  // namespace

std::vector<float> cluster_token(const float* vectors, std::uint64_t n, std::uint32_t dim,
                                 std::uint32_t k, std::uint32_t iterations,
                                 std::uint64_t seed, DistOpCounter* ops) {
    KmeansResult res = lloyd_kmeans(vectors, n, dim, k, iterations, seed, ops);
    renormalize_rows(res.centroids.data(), k, dim);
    return std::move(res.centroids);
}

TokenPartitionedCodebook train(const TokenVectorCorpus& corpus, const TokenIndex& index,
                               const std::vector<TokenStats>& stats,
                               const AllocationPlan& plan, std::uint32_t iterations,
                               std::uint64_t seed, std::uint32_t thread_count,
                               DistOpCounter* ops) {
    if (stats.size() != plan.centroids_per_token.size()) {
        throw InternalError("train: plan does not match the stats list");
    }
    TokenPartitionedCodebook cb;
    cb.dim = corpus.dim;
    cb.vocab_size = corpus.vocab_size;
    cb.ranges.assign(corpus.vocab_size, CentroidRange{});

    std::uint64_t total = 0;
    for (std::size_t s = 0; s < stats.size(); ++s) {
        const std::uint32_t kj = plan.centroids_per_token[s];
        if (kj == 0) throw InternalError("train: zero centroids planned for a present token");
        cb.ranges[stats[s].token_id] = CentroidRange{total, kj};
        total += kj;
    }
    cb.centroids.assign(total * corpus.dim, 0.0f);

    const std::uint32_t threads = resolve_threads(thread_count);
    std::atomic<std::size_t> next{0};
    std::vector<DistOpCounter> ops_per_worker(threads, 0);

    run_workers(threads, "train", [&](std::uint32_t worker) {
        std::vector<float> scratch;
        for (;;) {
            const std::size_t s = next.fetch_add(1);
            if (s >= stats.size()) break;
            const TokenId t = stats[s].token_id;
            const CentroidRange range = cb.ranges[t];
            const std::uint64_t n = index.count(t);
            const std::uint64_t ks = token_seed(seed, t);

            const auto rows = sample_rows(index.rows_of(t), n,
                                          kTrainRowsPerCentroid * range.length, ks);
            scratch.resize(rows.size() * corpus.dim);
            for (std::size_t i = 0; i < rows.size(); ++i) {
                std::memcpy(scratch.data() + i * corpus.dim, corpus.row(rows[i]),
                            corpus.dim * sizeof(float));
            }
            try {
                const auto cents =
                    cluster_token(scratch.data(), rows.size(), corpus.dim, range.length,
                                  iterations, ks ^ 0x9e3779b97f4a7c15ull,
                                  &ops_per_worker[worker]);
                std::memcpy(cb.centroids.data() + range.offset * corpus.dim, cents.data(),
                            cents.size() * sizeof(float));
            } catch (const std::exception& e) {
                throw InternalError("token " + std::to_string(t) + ": " + e.what());
            }
        }
    });

    if (ops) {
        for (DistOpCounter c : ops_per_worker) *ops += c;
    }
    return cb;
}

Assignment assign(const TokenVectorCorpus& corpus, const TokenIndex& index,
                  const TokenPartitionedCodebook& codebook, std::uint32_t thread_count,
                  DistOpCounter* ops) {
    if (codebook.dim != corpus.dim) {
        throw VocabMismatchError("assign: codebook dim " + std::to_string(codebook.dim) +
                                 " does not match corpus dim " + std::to_string(corpus.dim));
    }
    if (codebook.vocab_size < corpus.vocab_size) {
        throw VocabMismatchError("assign: codebook vocabulary is smaller than the corpus");
    }
    for (TokenId t = 0; t < corpus.vocab_size; ++t) {
        if (index.count(t) > 0 && codebook.ranges[t].length == 0) {
            throw VocabMismatchError("assign: token " + std::to_string(t) +
                                     " has no centroids in the codebook");
        }
    }

    Assignment out;
    out.centroid_ids.resize(corpus.num_vectors());
    out.residual_norms.resize(corpus.num_vectors());

    constexpr std::uint64_t kChunk = 4096;
    const std::uint32_t threads = resolve_threads(thread_count);
    std::atomic<std::size_t> next{0};
    std::vector<DistOpCounter> ops_per_worker(threads, 0);

    std::vector<TokenId> present;
    for (TokenId t = 0; t < corpus.vocab_size; ++t) {
        if (index.count(t) > 0) present.push_back(t);
    }

    run_workers(threads, "assign", [&](std::uint32_t worker) {
        std::vector<float> scratch(kChunk * corpus.dim);
        std::vector<std::uint32_t> local(kChunk);
        for (;;) {
            const std::size_t p = next.fetch_add(1);
            if (p >= present.size()) break;
            const TokenId t = present[p];
            const CentroidRange range = codebook.ranges[t];
            const float* cents = codebook.centroids.data() + range.offset * corpus.dim;
            const std::uint64_t n = index.count(t);
            const std::uint64_t* rows = index.rows_of(t);

            for (std::uint64_t base = 0; base < n; base += kChunk) {
                const std::uint64_t cn = std::min(kChunk, n - base);
                for (std::uint64_t i = 0; i < cn; ++i) {
                    std::memcpy(scratch.data() + i * corpus.dim, corpus.row(rows[base + i]),
                                corpus.dim * sizeof(float));
                }
                assign_nearest(scratch.data(), cn, corpus.dim, cents, range.length,
                               local.data(), nullptr, &ops_per_worker[worker]);
                for (std::uint64_t i = 0; i < cn; ++i) {
                    const std::uint64_t row = rows[base + i];
                    const CentroidId cid =
                        static_cast<CentroidId>(range.offset + local[i]);
                    out.centroid_ids[row] = cid;
                    out.residual_norms[row] =
                        l2_distance(corpus.row(row), codebook.centroid(cid), corpus.dim);
                }
            }
        }
    });

    if (ops) {
        for (DistOpCounter c : ops_per_worker) *ops += c;
    }
    return out;
}

std::vector<float> baseline_kmeans(const TokenVectorCorpus& corpus, std::uint32_t k,
                                   std::uint32_t iterations, std::uint64_t seed,
                                   std::uint64_t sample_cap, DistOpCounter* ops) {
    const std::uint64_t n = corpus.num_vectors();
    if (n <= sample_cap) {
        KmeansResult res =
            lloyd_kmeans(corpus.vectors.data(), n, corpus.dim, k, iterations, seed, ops);
        return std::move(res.centroids);
    }
    std::vector<std::uint64_t> all(n);
    for (std::uint64_t i = 0; i < n; ++i) all[i] = i;
    const auto rows = sample_rows(all.data(), n, sample_cap, seed);
    std::vector<float> sample(rows.size() * corpus.dim);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::memcpy(sample.data() + i * corpus.dim, corpus.row(rows[i]),
                    corpus.dim * sizeof(float));
    }
    KmeansResult res =
        lloyd_kmeans(sample.data(), rows.size(), corpus.dim, k, iterations, seed, ops);
    return std::move(res.centroids);
}

void save_codebook(const TokenPartitionedCodebook& cb, const std::filesystem::path& path) {
    io::FileWriter w(path);
    io::write_magic(w, kCodebookMagic);
    w.write_u64(cb.num_centroids());
    w.write_u32(cb.dim);
    w.write_u64(cb.vocab_size);
    w.write_span(std::span<const float>(cb.centroids));
    for (const CentroidRange& r : cb.ranges) {
        w.write_u64(r.offset);
        w.write_u32(r.length);
    }
    w.close();
}

TokenPartitionedCodebook load_codebook(const std::filesystem::path& path) {
    io::FileReader r(path);
    io::check_magic(r, kCodebookMagic, "codebook file " + path.string());
    const std::uint64_t count = r.read_u64();
    TokenPartitionedCodebook cb;
    cb.dim = r.read_u32();
    const std::uint64_t vocab = r.read_u64();
    if (cb.dim == 0) throw FormatError("codebook file " + path.string() + ": zero dim");
    cb.vocab_size = static_cast<std::uint32_t>(vocab);
    if (cb.vocab_size != vocab) {
        throw FormatError("codebook file " + path.string() + ": vocab size overflow");
    }
    const std::uint64_t expect = 8 + 8 + 4 + 8 + count * cb.dim * 4 + vocab * 12;
    if (r.size() != expect) {
        throw SizeMismatchError("codebook file " + path.string() + ": expected " +
                                std::to_string(expect) + " bytes, found " +
                                std::to_string(r.size()));
    }
    cb.centroids.resize(count * cb.dim);
    r.read_span(std::span<float>(cb.centroids));
    cb.ranges.resize(vocab);
    std::uint64_t cursor = 0;
    for (CentroidRange& range : cb.ranges) {
        range.offset = r.read_u64();
        range.length = r.read_u32();
        if (range.length == 0) continue;
        if (range.offset != cursor) {
            throw DataError("codebook file " + path.string() +
                            ": token ranges are not contiguous");
        }
        cursor += range.length;
    }
    if (cursor != count) {
        throw DataError("codebook file " + path.string() + ": token ranges cover " +
                        std::to_string(cursor) + " of " + std::to_string(count) +
                        " centroids");
    }
    return cb;
}

void save_assignment(const Assignment& a, const std::filesystem::path& path) {
    io::FileWriter w(path);
    io::write_magic(w, kAssignMagic);
    w.write_u64(a.size());
    w.write_span(std::span<const CentroidId>(a.centroid_ids));
    w.write_span(std::span<const float>(a.residual_norms));
    w.close();
}

Assignment load_assignment(const std::filesystem::path& path) {
    io::FileReader r(path);
    io::check_magic(r, kAssignMagic, "assignment file " + path.string());
    const std::uint64_t n = r.read_u64();
    const std::uint64_t expect = 8 + 8 + n * 8;
    if (r.size() != expect) {
        throw SizeMismatchError("assignment file " + path.string() + ": expected " +
                                std::to_string(expect) + " bytes, found " +
                                std::to_string(r.size()));
    }
    Assignment a;
    a.centroid_ids.resize(n);
    a.residual_norms.resize(n);
    r.read_span(std::span<CentroidId>(a.centroid_ids));
    r.read_span(std::span<float>(a.residual_norms));
    return a;
}

}  // namespace mvr
