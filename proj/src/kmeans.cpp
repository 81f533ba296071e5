#include "mvr/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define MVR_KERNEL_AVX2 1
#endif

namespace mvr {

namespace {

constexpr std::uint32_t kCentroidLane = 8;   // centroid block width
constexpr float kInf = std::numeric_limits<float>::infinity();

// Centroids transposed to dim-major rows padded to the lane width, plus
// squared norms (padding lanes get +inf so they never win the argmin).
struct TransposedCentroids {
    std::uint32_t k = 0;
    std::uint32_t k_padded = 0;
    std::uint32_t dim = 0;
    std::vector<float> data;    // dim rows x k_padded
    std::vector<float> norm2;   // k_padded

    void build(const float* centroids, std::uint32_t k_, std::uint32_t dim_) {
        k = k_;
        dim = dim_;
        k_padded = (k + kCentroidLane - 1) / kCentroidLane * kCentroidLane;
        data.assign(std::size_t(dim) * k_padded, 0.0f);
        norm2.assign(k_padded, kInf);
        for (std::uint32_t c = 0; c < k; ++c) {
            const float* src = centroids + std::size_t(c) * dim;
            float n2 = 0.0f;
            for (std::uint32_t r = 0; r < dim; ++r) {
                data[std::size_t(r) * k_padded + c] = src[r];
                n2 += src[r] * src[r];
            }
            norm2[c] = n2;
        }
    }
};

inline float squared_norm(const float* x, std::uint32_t dim) {
    float n2 = 0.0f;
    for (std::uint32_t r = 0; r < dim; ++r) n2 += x[r] * x[r];
    return n2;
}

inline float l2_sq_f(const float* a, const float* b, std::uint32_t dim) {
    float acc = 0.0f;
    for (std::uint32_t r = 0; r < dim; ++r) {
        const float d = a[r] - b[r];
        acc += d * d;
    }
    return acc;
}

// Scores one point against a lane of kCentroidLane centroids.
inline void score_lane(const float* x, const float* cen_t, std::uint32_t k_padded,
                       std::uint32_t dim, std::uint32_t c0, const float* norm2,
                       float* scores) {
    float acc[kCentroidLane] = {0};
    for (std::uint32_t r = 0; r < dim; ++r) {
        const float xv = x[r];
        const float* ct = cen_t + std::size_t(r) * k_padded + c0;
        for (std::uint32_t w = 0; w < kCentroidLane; ++w) acc[w] += xv * ct[w];
    }
    for (std::uint32_t w = 0; w < kCentroidLane; ++w) {
        scores[w] = norm2[c0 + w] - 2.0f * acc[w];
    }
}

#ifdef MVR_KERNEL_AVX2

void assign_points_block4(const float* points, std::size_t n, std::uint32_t dim,
                          const TransposedCentroids& tc, std::uint32_t* assign_out,
                          float* score_out) {
    const std::uint32_t kp = tc.k_padded;
    const float* cen_t = tc.data.data();
    const float* norm2 = tc.norm2.data();
    const __m256 minus_two = _mm256_set1_ps(-2.0f);
    const __m256i lane_iota = _mm256_setr_epi32(0, 1, 2, 3, 4, 5, 6, 7);

    std::size_t p = 0;
    for (; p + 4 <= n; p += 4) {
        const float* x0 = points + (p + 0) * dim;
        const float* x1 = points + (p + 1) * dim;
        const float* x2 = points + (p + 2) * dim;
        const float* x3 = points + (p + 3) * dim;
        __m256 best[4], bid[4];
        for (int i = 0; i < 4; ++i) {
            best[i] = _mm256_set1_ps(kInf);
            bid[i] = _mm256_setzero_ps();
        }
        for (std::uint32_t c0 = 0; c0 < kp; c0 += kCentroidLane) {
            __m256 a0 = _mm256_setzero_ps(), a1 = _mm256_setzero_ps();
            __m256 a2 = _mm256_setzero_ps(), a3 = _mm256_setzero_ps();
            const float* ct = cen_t + c0;
            for (std::uint32_t r = 0; r < dim; ++r, ct += kp) {
                const __m256 cv = _mm256_loadu_ps(ct);
                a0 = _mm256_fmadd_ps(_mm256_set1_ps(x0[r]), cv, a0);
                a1 = _mm256_fmadd_ps(_mm256_set1_ps(x1[r]), cv, a1);
                a2 = _mm256_fmadd_ps(_mm256_set1_ps(x2[r]), cv, a2);
                a3 = _mm256_fmadd_ps(_mm256_set1_ps(x3[r]), cv, a3);
            }
            const __m256 n2 = _mm256_loadu_ps(norm2 + c0);
            const __m256 ids = _mm256_castsi256_ps(
                _mm256_add_epi32(_mm256_set1_epi32(static_cast<int>(c0)), lane_iota));
            __m256 s[4] = {_mm256_fmadd_ps(minus_two, a0, n2),
                           _mm256_fmadd_ps(minus_two, a1, n2),
                           _mm256_fmadd_ps(minus_two, a2, n2),
                           _mm256_fmadd_ps(minus_two, a3, n2)};
            for (int i = 0; i < 4; ++i) {
                const __m256 lt = _mm256_cmp_ps(s[i], best[i], _CMP_LT_OQ);
                best[i] = _mm256_blendv_ps(best[i], s[i], lt);
                bid[i] = _mm256_blendv_ps(bid[i], ids, lt);
            }
        }
        // Horizontal argmin over the 8 lanes; the lowest centroid id wins
        // ties, matching the scalar path.
        for (int i = 0; i < 4; ++i) {
            alignas(32) float bs[8];
            alignas(32) std::uint32_t bi[8];
            _mm256_store_ps(bs, best[i]);
            _mm256_store_si256(reinterpret_cast<__m256i*>(bi), _mm256_castps_si256(bid[i]));
            float b = kInf;
            std::uint32_t id = 0;
            for (int w = 0; w < 8; ++w) {
                if (bs[w] < b || (bs[w] == b && bi[w] < id)) {
                    b = bs[w];
                    id = bi[w];
                }
            }
            assign_out[p + i] = id;
            if (score_out) score_out[p + i] = b;
        }
    }
    for (; p < n; ++p) {
        const float* x = points + p * dim;
        float best = kInf;
        std::uint32_t bidx = 0;
        float scores[kCentroidLane];
        for (std::uint32_t c0 = 0; c0 < kp; c0 += kCentroidLane) {
            score_lane(x, cen_t, kp, dim, c0, norm2, scores);
            for (std::uint32_t w = 0; w < kCentroidLane; ++w) {
                if (scores[w] < best) {
                    best = scores[w];
                    bidx = c0 + w;
                }
            }
        }
        assign_out[p] = bidx;
        if (score_out) score_out[p] = best;
    }
}

#else

void assign_points_block4(const float* points, std::size_t n, std::uint32_t dim,
                          const TransposedCentroids& tc, std::uint32_t* assign_out,
                          float* score_out) {
    const std::uint32_t kp = tc.k_padded;
    const float* cen_t = tc.data.data();
    const float* norm2 = tc.norm2.data();

    std::size_t p = 0;
    for (; p + 4 <= n; p += 4) {
        const float* x0 = points + (p + 0) * dim;
        const float* x1 = points + (p + 1) * dim;
        const float* x2 = points + (p + 2) * dim;
        const float* x3 = points + (p + 3) * dim;
        float best[4] = {kInf, kInf, kInf, kInf};
        std::uint32_t bid[4] = {0, 0, 0, 0};
        for (std::uint32_t c0 = 0; c0 < kp; c0 += kCentroidLane) {
            float a0[kCentroidLane] = {0}, a1[kCentroidLane] = {0};
            float a2[kCentroidLane] = {0}, a3[kCentroidLane] = {0};
            for (std::uint32_t r = 0; r < dim; ++r) {
                const float* ct = cen_t + std::size_t(r) * kp + c0;
                const float v0 = x0[r], v1 = x1[r], v2 = x2[r], v3 = x3[r];
                for (std::uint32_t w = 0; w < kCentroidLane; ++w) {
                    a0[w] += v0 * ct[w];
                    a1[w] += v1 * ct[w];
                    a2[w] += v2 * ct[w];
                    a3[w] += v3 * ct[w];
                }
            }
            for (std::uint32_t w = 0; w < kCentroidLane; ++w) {
                const float n2 = norm2[c0 + w];
                const float s0 = n2 - 2.0f * a0[w];
                const float s1 = n2 - 2.0f * a1[w];
                const float s2 = n2 - 2.0f * a2[w];
                const float s3 = n2 - 2.0f * a3[w];
                if (s0 < best[0]) { best[0] = s0; bid[0] = c0 + w; }
                if (s1 < best[1]) { best[1] = s1; bid[1] = c0 + w; }
                if (s2 < best[2]) { best[2] = s2; bid[2] = c0 + w; }
                if (s3 < best[3]) { best[3] = s3; bid[3] = c0 + w; }
            }
        }
        for (int i = 0; i < 4; ++i) {
            assign_out[p + i] = bid[i];
            if (score_out) score_out[p + i] = best[i];
        }
    }
    for (; p < n; ++p) {
        const float* x = points + p * dim;
        float best = kInf;
        std::uint32_t bid = 0;
        float scores[kCentroidLane];
        for (std::uint32_t c0 = 0; c0 < kp; c0 += kCentroidLane) {
            score_lane(x, cen_t, kp, dim, c0, norm2, scores);
            for (std::uint32_t w = 0; w < kCentroidLane; ++w) {
                if (scores[w] < best) { best = scores[w]; bid = c0 + w; }
            }
        }
        assign_out[p] = bid;
        if (score_out) score_out[p] = best;
    }
}

#endif  // MVR_KERNEL_AVX2

struct RepairContext {
    const float* points;
    std::size_t n;
    std::uint32_t dim;
    std::uint32_t k;
};

// Moves the farthest member of the highest-inertia cluster into each empty
// cluster. Clusters of size 1 never donate, so no repair empties another
// cluster.
void repair_empty_clusters(const RepairContext& ctx, std::vector<float>& centroids,
                           std::vector<std::uint32_t>& assignment,
                           std::vector<float>& dist2, std::vector<std::uint32_t>& sizes) {
    bool any_empty = false;
    for (std::uint32_t c = 0; c < ctx.k && !any_empty; ++c) any_empty = (sizes[c] == 0);
    if (!any_empty) return;

    std::vector<double> cluster_inertia(ctx.k, 0.0);
    for (std::size_t i = 0; i < ctx.n; ++i) cluster_inertia[assignment[i]] += dist2[i];

    for (std::uint32_t c = 0; c < ctx.k; ++c) {
        if (sizes[c] != 0) continue;
        std::uint32_t donor = ctx.k;
        double donor_inertia = -1.0;
        for (std::uint32_t j = 0; j < ctx.k; ++j) {
            if (sizes[j] >= 2 && cluster_inertia[j] > donor_inertia) {
                donor_inertia = cluster_inertia[j];
                donor = j;
            }
        }
        if (donor == ctx.k) break;  // every non-empty cluster is a singleton
        std::size_t farthest = ctx.n;
        float far_d = -1.0f;
        for (std::size_t i = 0; i < ctx.n; ++i) {
            if (assignment[i] == donor && dist2[i] > far_d) {
                far_d = dist2[i];
                farthest = i;
            }
        }
        std::memcpy(centroids.data() + std::size_t(c) * ctx.dim,
                    ctx.points + farthest * ctx.dim, ctx.dim * sizeof(float));
        assignment[farthest] = c;
        cluster_inertia[donor] -= far_d;
        cluster_inertia[c] = 0.0;
        dist2[farthest] = 0.0f;
        sizes[donor]--;
        sizes[c] = 1;
    }
}

}  // namespace

double assign_nearest(const float* points, std::size_t n, std::uint32_t dim,
                      const float* centroids, std::uint32_t k,
                      std::uint32_t* assign_out, float* dist2_out, DistOpCounter* ops) {
    TransposedCentroids tc;
    tc.build(centroids, k, dim);
    if (ops) *ops += std::uint64_t(n) * k;

    std::vector<float> scores;
    float* score_ptr = nullptr;
    if (dist2_out) {
        scores.resize(n);
        score_ptr = scores.data();
    }
    double inertia = 0.0;
    if (!dist2_out) {
        // Still need scores for the inertia sum; process in chunks.
        constexpr std::size_t kChunk = 4096;
        std::vector<float> chunk_scores(std::min(n, kChunk));
        for (std::size_t p0 = 0; p0 < n; p0 += kChunk) {
            const std::size_t len = std::min(kChunk, n - p0);
            assign_points_block4(points + p0 * dim, len, dim, tc, assign_out + p0,
                                 chunk_scores.data());
            for (std::size_t i = 0; i < len; ++i) {
                const float x2 = squared_norm(points + (p0 + i) * dim, dim);
                inertia += std::max(0.0, double(chunk_scores[i]) + double(x2));
            }
        }
        return inertia;
    }
    assign_points_block4(points, n, dim, tc, assign_out, score_ptr);
    for (std::size_t i = 0; i < n; ++i) {
        const float x2 = squared_norm(points + i * dim, dim);
        const double d2 = std::max(0.0, double(scores[i]) + double(x2));
        dist2_out[i] = static_cast<float>(d2);
        inertia += d2;
    }
    return inertia;
}

void dot_products(const float* qs, std::size_t nq, const float* xs, std::size_t n,
                  std::uint32_t dim, float* out) {
    TransposedCentroids tc;
    tc.build(xs, static_cast<std::uint32_t>(n), dim);
    const std::uint32_t kp = tc.k_padded;
    for (std::size_t i = 0; i < nq; ++i) {
        const float* q = qs + i * dim;
        float* row = out + i * n;
        for (std::uint32_t c0 = 0; c0 < kp; c0 += kCentroidLane) {
            float acc[kCentroidLane] = {0};
            for (std::uint32_t r = 0; r < dim; ++r) {
                const float qv = q[r];
                const float* ct = tc.data.data() + std::size_t(r) * kp + c0;
                for (std::uint32_t w = 0; w < kCentroidLane; ++w) acc[w] += qv * ct[w];
            }
            const std::uint32_t lim = std::min(kCentroidLane, static_cast<std::uint32_t>(n) - c0);
            for (std::uint32_t w = 0; w < lim; ++w) row[c0 + w] = acc[w];
        }
    }
}

float dot(const float* a, const float* b, std::uint32_t dim) {
    float acc = 0.0f;
    for (std::uint32_t i = 0; i < dim; ++i) acc += a[i] * b[i];
    return acc;
}

float l2_distance(const float* a, const float* b, std::uint32_t dim) {
    double acc = 0.0;
    for (std::uint32_t i = 0; i < dim; ++i) {
        const double d = double(a[i]) - double(b[i]);
        acc += d * d;
    }
    return static_cast<float>(std::sqrt(acc));
}

KmeansResult lloyd_kmeans(const float* points, std::size_t n, std::uint32_t dim,
                          std::uint32_t k, std::uint32_t iterations, std::uint64_t seed,
                          DistOpCounter* ops) {
    if (k == 0 || k > n) {
        throw InternalError("lloyd_kmeans: k must satisfy 1 <= k <= n (got k=" +
                            std::to_string(k) + ", n=" + std::to_string(n) + ")");
    }
    if (iterations == 0) throw InternalError("lloyd_kmeans: iterations must be >= 1");

    std::mt19937_64 rng(seed);
    KmeansResult res;
    res.centroids.resize(std::size_t(k) * dim);

    // k-means++ seeding. min_d2 tracks the distance to the closest chosen
    // centroid; each new centroid is drawn proportionally to it.
    std::vector<float> min_d2(n, kInf);
    {
        std::uniform_int_distribution<std::size_t> first(0, n - 1);
        std::size_t pick = first(rng);
        std::memcpy(res.centroids.data(), points + pick * dim, dim * sizeof(float));
        for (std::uint32_t c = 1; c < k; ++c) {
            const float* prev = res.centroids.data() + std::size_t(c - 1) * dim;
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const float d2 = l2_sq_f(points + i * dim, prev, dim);
                if (d2 < min_d2[i]) min_d2[i] = d2;
                total += min_d2[i];
            }
            if (ops) *ops += n;
            if (total <= 0.0) {
                // Fewer distinct points than centroids requested; duplicate
                // seeding is repaired after the first assignment.
                std::uniform_int_distribution<std::size_t> any(0, n - 1);
                pick = any(rng);
            } else {
                std::uniform_real_distribution<double> u(0.0, total);
                const double target = u(rng);
                double cum = 0.0;
                pick = n - 1;
                for (std::size_t i = 0; i < n; ++i) {
                    cum += min_d2[i];
                    if (cum >= target) {
                        pick = i;
                        break;
                    }
                }
            }
            std::memcpy(res.centroids.data() + std::size_t(c) * dim, points + pick * dim,
                        dim * sizeof(float));
        }
    }

    res.assignment.resize(n);
    std::vector<float> dist2(n);
    std::vector<std::uint32_t> sizes(k);
    std::vector<double> sums(std::size_t(k) * dim);

    for (std::uint32_t it = 0; it < iterations; ++it) {
        const double inertia = assign_nearest(points, n, dim, res.centroids.data(), k,
                                              res.assignment.data(), dist2.data(), ops);
        res.inertia_per_iter.push_back(inertia);

        std::fill(sizes.begin(), sizes.end(), 0u);
        for (std::size_t i = 0; i < n; ++i) sizes[res.assignment[i]]++;
        repair_empty_clusters({points, n, dim, k}, res.centroids, res.assignment, dist2,
                              sizes);

        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double* dst = sums.data() + std::size_t(res.assignment[i]) * dim;
            const float* src = points + i * dim;
            for (std::uint32_t r = 0; r < dim; ++r) dst[r] += src[r];
        }
        for (std::uint32_t c = 0; c < k; ++c) {
            if (sizes[c] == 0) continue;  // unreachable after repair unless all singletons
            const double inv = 1.0 / sizes[c];
            float* dst = res.centroids.data() + std::size_t(c) * dim;
            const double* src = sums.data() + std::size_t(c) * dim;
            for (std::uint32_t r = 0; r < dim; ++r) dst[r] = static_cast<float>(src[r] * inv);
        }
    }
    return res;
}

void renormalize_rows(float* data, std::size_t rows, std::uint32_t dim) {
    for (std::size_t i = 0; i < rows; ++i) {
        float* v = data + i * dim;
        double n2 = 0.0;
        for (std::uint32_t r = 0; r < dim; ++r) n2 += double(v[r]) * double(v[r]);
        if (n2 <= 0.0) continue;
        const float inv = static_cast<float>(1.0 / std::sqrt(n2));
        for (std::uint32_t r = 0; r < dim; ++r) v[r] *= inv;
    }
}

}  // namespace mvr
