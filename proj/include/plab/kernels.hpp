#pragma once

// Data-parallel scan kernels. Every kernel has a serial reference in
// kernels::serial and an OpenMP version in kernels::omp with the same
// signature. Each output element is computed by exactly one thread with the
// same arithmetic as the serial loop, so both versions are bit-identical.

#include <cstddef>
#include <cstdint>
#include <span>

#include "plab/matrix.hpp"

namespace plab::kernels {

namespace serial {

/// out[i] = <rows.row(i), q>
void dot_scores(const Matrix& rows, std::span<const double> q, std::span<double> out);

/// out[i] = squared Euclidean distance from q to rows.row(i)
void sq_distances(const Matrix& rows, std::span<const double> q, std::span<double> out);

/// For each point, the nearest centroid (squared Euclidean, ties to the lower
/// index) and its distance.
void assign_nearest(const Matrix& points, const Matrix& centroids, std::span<std::uint32_t> assign,
                    std::span<double> dist);

/// Asymmetric distance scan: out[i] = sum_s table[s * ksub + codes[i * m + s]].
void adc_scan(std::span<const std::uint16_t> codes, std::size_t m, std::span<const double> table, std::size_t ksub,
              std::span<double> out);

}  // namespace serial

namespace omp {

void dot_scores(const Matrix& rows, std::span<const double> q, std::span<double> out);
void sq_distances(const Matrix& rows, std::span<const double> q, std::span<double> out);
void assign_nearest(const Matrix& points, const Matrix& centroids, std::span<std::uint32_t> assign,
                    std::span<double> dist);
void adc_scan(std::span<const std::uint16_t> codes, std::size_t m, std::span<const double> table, std::size_t ksub,
              std::span<double> out);

}  // namespace omp

/// Thread cap from PLAB_THREADS (unset or invalid: OpenMP default). Applied once.
void configure_threads_from_env();
int max_threads();

}  // namespace plab::kernels
