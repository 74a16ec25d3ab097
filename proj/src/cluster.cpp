#include "plab/cluster.hpp"

#include <algorithm>
#include <cmath>

#include "plab/error.hpp"
#include "plab/kernels.hpp"
#include "plab/rng.hpp"

namespace plab {

Embedding mean_embedding(std::span<const Embedding> embeddings) {
  if (embeddings.empty()) throw InvalidArgument("mean_embedding: empty input");
  const std::size_t d = embeddings.front().dim();
  std::vector<double> sum(d, 0.0);
  for (const auto& e : embeddings) {
    if (e.dim() != d) throw InvalidArgument("mean_embedding: dimension mismatch");
    for (std::size_t j = 0; j < d; ++j) sum[j] += e[j];
  }
  const double n = static_cast<double>(embeddings.size());
  for (auto& x : sum) x /= n;
  return Embedding(std::move(sum));
}

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double t = a[j] - b[j];
    s += t * t;
  }
  return s;
}

Matrix seed_plus_plus(const Matrix& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows;
  Matrix centroids(k, points.cols);
  std::vector<double> d2(n);
  std::size_t first = rng.uniform_int(n);
  std::copy(points.row(first).begin(), points.row(first).end(), centroids.row(0).begin());
  kernels::omp::sq_distances(points, centroids.row(0), d2);
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = 0;
    if (total <= 0.0) {
      pick = rng.uniform_int(n);
    } else {
      const double u = rng.uniform() * total;
      double cum = 0.0;
      pick = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        cum += d2[i];
        if (cum > u) {
          pick = i;
          break;
        }
      }
      if (pick == n) {  // rounding at the tail: take the last positive-weight point
        for (std::size_t i = n; i-- > 0;)
          if (d2[i] > 0.0) {
            pick = i;
            break;
          }
      }
    }
    std::copy(points.row(pick).begin(), points.row(pick).end(), centroids.row(c).begin());
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(points.row(i), centroids.row(c)));
  }
  return centroids;
}

void repair_empty(const Matrix& points, Matrix& centroids, std::vector<std::uint32_t>& assign,
                  std::vector<double>& dist) {
  const std::size_t k = centroids.rows;
  std::vector<std::size_t> counts(k, 0);
  for (auto a : assign) ++counts[a];
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] != 0) continue;
    const auto largest = static_cast<std::uint32_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    if (counts[largest] < 2) break;  // nothing left to split
    std::size_t far = assign.size();
    for (std::size_t i = 0; i < assign.size(); ++i)
      if (assign[i] == largest && (far == assign.size() || dist[i] > dist[far])) far = i;
    assign[far] = static_cast<std::uint32_t>(c);
    dist[far] = 0.0;
    --counts[largest];
    ++counts[c];
    std::copy(points.row(far).begin(), points.row(far).end(), centroids.row(c).begin());
  }
}

void update_means(const Matrix& points, std::span<const std::uint32_t> assign, Matrix& centroids) {
  const std::size_t k = centroids.rows, d = points.cols;
  Matrix sums(k, d);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < points.rows; ++i) {
    auto s = sums.row(assign[i]);
    const auto p = points.row(i);
    for (std::size_t j = 0; j < d; ++j) s[j] += p[j];
    ++counts[assign[i]];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) continue;  // keeps its previous position
    auto dst = centroids.row(c);
    const auto s = sums.row(c);
    const double n = static_cast<double>(counts[c]);
    for (std::size_t j = 0; j < d; ++j) dst[j] = s[j] / n;
  }
}

}  // namespace

double clustering_inertia(const Matrix& points, const Matrix& centroids, std::span<const std::uint32_t> assignments) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.rows; ++i) total += sq_dist(points.row(i), centroids.row(assignments[i]));
  return total;
}

Clustering kmeans(const Matrix& points, std::size_t k, std::size_t max_iters, std::uint64_t seed) {
  if (k == 0) throw InvalidArgument("kmeans: k must be >= 1");
  if (k > points.rows)
    throw InvalidArgument("kmeans: k=" + std::to_string(k) + " exceeds the number of points (" +
                          std::to_string(points.rows) + ")");
  Rng rng(seed);
  Clustering out;
  out.k = k;
  out.centroids = seed_plus_plus(points, k, rng);

  const std::size_t n = points.rows;
  std::vector<std::uint32_t> assign(n), prev;
  std::vector<double> dist(n);
  for (std::size_t it = 0; it < std::max<std::size_t>(max_iters, 1); ++it) {
    kernels::omp::assign_nearest(points, out.centroids, assign, dist);
    if (it > 0 && assign == prev) break;
    repair_empty(points, out.centroids, assign, dist);
    update_means(points, assign, out.centroids);
    out.inertia_history.push_back(clustering_inertia(points, out.centroids, assign));
    out.iterations = it + 1;
    prev = assign;
  }
  out.assignments = std::move(prev);
  out.inertia = out.inertia_history.back();
  return out;
}

double attack_objective(const Embedding& candidate, std::span<const Embedding> queries, Metric metric) {
  if (queries.empty()) throw InvalidArgument("attack_objective: empty query set");
  double total = 0.0;
  for (const auto& q : queries) total += similarity(candidate, q, metric);
  return total / static_cast<double>(queries.size());
}

Matrix normalize_rows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t i = 0; i < out.rows; ++i) {
    auto r = out.row(i);
    const double n = norm(r);
    if (n > 0.0)
      for (auto& x : r) x /= n;
  }
  return out;
}

}  // namespace plab
