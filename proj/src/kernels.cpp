#include "plab/kernels.hpp"

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace plab::kernels {

namespace {

inline double row_dot(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) s += a[j] * b[j];
  return s;
}

inline double row_sq_dist(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double t = a[j] - b[j];
    s += t * t;
  }
  return s;
}

inline void nearest(const double* p, const Matrix& centroids, std::uint32_t& best, double& best_d) {
  best = 0;
  best_d = row_sq_dist(p, centroids.data.data(), centroids.cols);
  for (std::size_t c = 1; c < centroids.rows; ++c) {
    const double dd = row_sq_dist(p, centroids.data.data() + c * centroids.cols, centroids.cols);
    if (dd < best_d) {
      best_d = dd;
      best = static_cast<std::uint32_t>(c);
    }
  }
}

inline double adc_one(const std::uint16_t* code, std::size_t m, const double* table, std::size_t ksub) {
  double s = 0.0;
  for (std::size_t sidx = 0; sidx < m; ++sidx) s += table[sidx * ksub + code[sidx]];
  return s;
}

}  // namespace

namespace serial {

void dot_scores(const Matrix& rows, std::span<const double> q, std::span<double> out) {
  for (std::size_t i = 0; i < rows.rows; ++i) out[i] = row_dot(rows.data.data() + i * rows.cols, q.data(), rows.cols);
}

void sq_distances(const Matrix& rows, std::span<const double> q, std::span<double> out) {
  for (std::size_t i = 0; i < rows.rows; ++i)
    out[i] = row_sq_dist(rows.data.data() + i * rows.cols, q.data(), rows.cols);
}

void assign_nearest(const Matrix& points, const Matrix& centroids, std::span<std::uint32_t> assign,
                    std::span<double> dist) {
  for (std::size_t i = 0; i < points.rows; ++i)
    nearest(points.data.data() + i * points.cols, centroids, assign[i], dist[i]);
}

void adc_scan(std::span<const std::uint16_t> codes, std::size_t m, std::span<const double> table, std::size_t ksub,
              std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = adc_one(codes.data() + i * m, m, table.data(), ksub);
}

}  // namespace serial

namespace omp {

void dot_scores(const Matrix& rows, std::span<const double> q, std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(rows.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] =
        row_dot(rows.data.data() + static_cast<std::size_t>(i) * rows.cols, q.data(), rows.cols);
}

void sq_distances(const Matrix& rows, std::span<const double> q, std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(rows.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] =
        row_sq_dist(rows.data.data() + static_cast<std::size_t>(i) * rows.cols, q.data(), rows.cols);
}

void assign_nearest(const Matrix& points, const Matrix& centroids, std::span<std::uint32_t> assign,
                    std::span<double> dist) {
  const auto n = static_cast<std::ptrdiff_t>(points.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    nearest(points.data.data() + u * points.cols, centroids, assign[u], dist[u]);
  }
}

void adc_scan(std::span<const std::uint16_t> codes, std::size_t m, std::span<const double> table, std::size_t ksub,
              std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] =
        adc_one(codes.data() + static_cast<std::size_t>(i) * m, m, table.data(), ksub);
}

}  // namespace omp

void configure_threads_from_env() {
#ifdef _OPENMP
  static const bool done = [] {
    if (const char* env = std::getenv("PLAB_THREADS")) {
      try {
        const int n = std::stoi(env);
        if (n > 0) omp_set_num_threads(n);
      } catch (...) {
      }
    }
    return true;
  }();
  (void)done;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace plab::kernels
