#pragma once

#include "plab/tensor.hpp"

#include <cstdint>
#include <vector>

namespace plab {

struct KMeansResult {
    Tensor centroids;            // (K, D)
    std::vector<int> assignment; // per row
    std::vector<double> sse_history;
    double sse = 0.0;
};

// Lloyd's algorithm with k-means++ seeding; Euclidean metric, at most
// max_iter iterations or centroid shift < tol. Deterministic per seed.
KMeansResult kmeans(const Tensor& rows, int k, std::uint64_t seed, int max_iter = 100,
                    double tol = 1e-6);

} // namespace plab
