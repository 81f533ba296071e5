#pragma once

#include <cstdint>
#include <vector>

#include "mvr/common.hpp"

namespace mvr {

// Counter for point-centroid distance evaluations, incremented in bulk by
// the kernels. Shared by token-aware training and the flat baseline so the
// two are comparable.
using DistOpCounter = std::uint64_t;

// Nearest-centroid assignment under squared L2, ties broken by lowest
// centroid id. Scores are evaluated as ||c||^2 - 2<x,c> in a blocked,
// centroid-transposed kernel; true squared distances (when requested via
// dist2_out) are offset by ||x||^2 and clamped at zero. Returns the summed
// squared distance (inertia) in double precision.
double assign_nearest(const float* points, std::size_t n, std::uint32_t dim,
                      const float* centroids, std::uint32_t k,
                      std::uint32_t* assign_out, float* dist2_out, DistOpCounter* ops);

// <q_i, x_j> for all pairs into out[i*n + j]; ascending-index accumulation.
void dot_products(const float* qs, std::size_t nq, const float* xs, std::size_t n,
                  std::uint32_t dim, float* out);

float dot(const float* a, const float* b, std::uint32_t dim);

// Accurate ||a - b||_2 via the subtraction form (no cancellation), double
// accumulation. Used wherever residual norms are stored or checked.
float l2_distance(const float* a, const float* b, std::uint32_t dim);

struct KmeansResult {
    std::vector<float> centroids;          // k x dim, raw means (not renormalized)
    std::vector<std::uint32_t> assignment; // per training point
    // Inertia of iteration t's assignment against iteration t's centroids;
    // Lloyd guarantees this sequence is non-increasing.
    std::vector<double> inertia_per_iter;
};

// Lloyd's algorithm with k-means++ seeding and deterministic behaviour for
// a fixed seed. Empty clusters are repaired by moving the farthest member
// of the highest-inertia cluster. Requires 1 <= k <= n.
KmeansResult lloyd_kmeans(const float* points, std::size_t n, std::uint32_t dim,
                          std::uint32_t k, std::uint32_t iterations, std::uint64_t seed,
                          DistOpCounter* ops = nullptr);

void renormalize_rows(float* data, std::size_t rows, std::uint32_t dim);

}  // namespace mvr
