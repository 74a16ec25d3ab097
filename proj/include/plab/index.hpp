#pragma once

// Corpus embedding stores: exact brute-force search and product quantization
// with asymmetric distance computation (ADC). Both keep ids in insertion
// order and rank hits by score descending, ties by ascending id.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "plab/embedder.hpp"
#include "plab/matrix.hpp"

namespace plab {

struct SearchHit {
  std::string id;
  double score = 0.0;
  std::size_t rank = 0;  // 1-based

  bool operator==(const SearchHit&) const = default;
};

struct InjectEntry {
  std::string id;
  Embedding vector;
};

/// Top-k of `scores` under (score desc, id asc).
std::vector<SearchHit> select_top_k(std::span<const double> scores, std::span<const std::string> ids, std::size_t k);

class ExactIndex {
 public:
  ExactIndex() = default;
  /// Throws DataError on duplicate ids, ragged rows or non-finite values.
  static ExactIndex build(Matrix vectors, std::vector<std::string> ids, Metric metric);

  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return vectors_.cols; }
  Metric metric() const noexcept { return metric_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const Matrix& vectors() const noexcept { return vectors_; }

  /// Score of every stored row against `q`, in row order. Serial scan.
  std::vector<double> scores(std::span<const double> q) const;
  /// Same, parallel over rows.
  std::vector<double> scores_parallel(std::span<const double> q) const;

  std::vector<SearchHit> search(std::span<const double> q, std::size_t k) const;
  std::vector<SearchHit> search(const Embedding& q, std::size_t k) const { return search(q.values(), k); }

  /// Returns the index with `entries` appended. Throws DataError on id collision.
  ExactIndex inject(std::span<const InjectEntry> entries) const;

  std::uint64_t byte_size() const noexcept { return vectors_.rows * vectors_.cols * sizeof(float); }

 private:
  void check_query(std::span<const double> q) const;
  std::vector<double> finish_cosine(std::span<const double> q, std::vector<double> dots) const;

  Matrix vectors_;
  std::vector<double> sq_norms_;  // filled for COSINE
  std::vector<std::string> ids_;
  Metric metric_ = Metric::Dot;
};

struct PqParams {
  std::size_t m = 8;
  std::size_t b = 8;
  std::size_t iterations = 25;
  std::uint64_t seed = 0;
};

class PqIndex {
 public:
  PqIndex() = default;

  /// Per sub-space k-means (k = 2^b, k-means++ seeding from
  /// derive_seed(seed, sub-space)), then each row is encoded to its nearest
  /// centroids. Throws InvalidArgument when m does not divide the dimension.
  static PqIndex train(const Matrix& vectors, std::vector<std::string> ids, Metric metric, const PqParams& params);

  /// Rebuilds from persisted parts.
  static PqIndex from_parts(Metric metric, std::size_t m, std::size_t b, Matrix codebooks,
                            std::vector<std::uint16_t> codes, std::vector<std::string> ids);

  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return m_ * sub_dim_; }
  std::size_t m() const noexcept { return m_; }
  std::size_t b() const noexcept { return b_; }
  std::size_t ksub() const noexcept { return ksub_; }
  std::size_t sub_dim() const noexcept { return sub_dim_; }
  Metric metric() const noexcept { return metric_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  /// Row (s * ksub + c) is centroid c of sub-space s.
  const Matrix& codebooks() const noexcept { return codebooks_; }
  const std::vector<std::uint16_t>& codes() const noexcept { return codes_; }
  /// Per sub-space inertia after each Lloyd update during training.
  const std::vector<std::vector<double>>& training_history() const noexcept { return history_; }

  /// ADC table: entry (s, c) is the query's contribution for centroid c of
  /// sub-space s. For COSINE the query is normalized first.
  std::vector<double> adc_table(std::span<const double> q) const;
  std::vector<double> scores(std::span<const double> q) const;
  std::vector<double> scores_parallel(std::span<const double> q) const;
  std::vector<SearchHit> search(std::span<const double> q, std::size_t k) const;
  std::vector<SearchHit> search(const Embedding& q, std::size_t k) const { return search(q.values(), k); }

  /// Concatenation of the coded centroids. Throws InvalidArgument if out of range.
  Embedding reconstruct(std::size_t row) const;
  Matrix reconstruct_all() const;

  /// Encodes with the frozen codebooks.
  PqIndex inject(std::span<const InjectEntry> entries) const;

  std::uint64_t byte_size() const noexcept;

 private:
  void encode_row(std::span<const double> v, std::uint16_t* out) const;
  void compute_norm(std::size_t row);

  Metric metric_ = Metric::Dot;
  std::size_t m_ = 0, b_ = 0, ksub_ = 0, sub_dim_ = 0;
  Matrix codebooks_;
  std::vector<std::uint16_t> codes_;
  std::vector<double> recon_norms_;
  std::vector<std::string> ids_;
  std::vector<std::vector<double>> history_;
};

/// Either index kind behind one value type.
class VectorIndex {
 public:
  VectorIndex() = default;
  VectorIndex(ExactIndex idx) : impl_(std::move(idx)) {}  // NOLINT(google-explicit-constructor)
  VectorIndex(PqIndex idx) : impl_(std::move(idx)) {}     // NOLINT(google-explicit-constructor)

  bool is_pq() const noexcept { return std::holds_alternative<PqIndex>(impl_); }
  const ExactIndex& exact() const { return std::get<ExactIndex>(impl_); }
  const PqIndex& pq() const { return std::get<PqIndex>(impl_); }

  std::size_t size() const;
  std::size_t dim() const;
  Metric metric() const;
  const std::vector<std::string>& ids() const;
  std::vector<double> scores(std::span<const double> q) const;
  std::vector<SearchHit> search(std::span<const double> q, std::size_t k) const;
  VectorIndex inject(std::span<const InjectEntry> entries) const;
  std::uint64_t byte_size() const;
  std::string kind() const { return is_pq() ? "pq" : "exact"; }

 private:
  std::variant<ExactIndex, PqIndex> impl_;
};

/// Directory layout: meta.json, ids.txt, vectors.bin (embedding dump; PQ
/// stores reconstructions) and, for PQ, codebooks.bin (embedding dump of
/// m * 2^b rows of dim d/m) plus codes.bin (u32 m, u64 rows, rows*m u16).
void save_index(const VectorIndex& index, const std::filesystem::path& dir);
VectorIndex load_index(const std::filesystem::path& dir);

}  // namespace plab
