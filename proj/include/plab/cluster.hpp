#pragma once

// k-means over query embeddings. Centroids are the per-cluster mean query
// embedding, the target that maximizes average dot-product similarity to
// the cluster's queries.

#include <cstdint>
#include <span>
#include <vector>

#include "plab/embedder.hpp"
#include "plab/matrix.hpp"

namespace plab {

struct Clustering {
  std::size_t k = 0;
  Matrix centroids;                         // k x d
  std::vector<std::uint32_t> assignments;  // point -> cluster
  double inertia = 0.0;                     // sum of squared distances to assigned centroid
  std::vector<double> inertia_history;      // one entry per completed Lloyd update
  std::size_t iterations = 0;

  Embedding centroid(std::size_t c) const { return row_embedding(centroids, c); }
};

/// Component-wise mean. Throws InvalidArgument on empty input or mixed dims.
Embedding mean_embedding(std::span<const Embedding> embeddings);

/// k-means++ seeding from Rng(seed), then Lloyd iterations until the
/// assignment is stable or `max_iters` updates ran. Empty clusters take the
/// farthest point of the largest cluster. Centroid sums run in point order, so
/// the result does not depend on the thread count.
Clustering kmeans(const Matrix& points, std::size_t k, std::size_t max_iters, std::uint64_t seed);

/// Sum of squared distances of each point to its assigned centroid.
double clustering_inertia(const Matrix& points, const Matrix& centroids, std::span<const std::uint32_t> assignments);

/// Mean similarity of `candidate` to every query. Throws on an empty query set.
double attack_objective(const Embedding& candidate, std::span<const Embedding> queries, Metric metric);

/// Rows scaled to unit norm (zero rows left as is).
Matrix normalize_rows(const Matrix& m);

}  // namespace plab
