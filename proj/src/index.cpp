#include "plab/index.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include "json.hpp"
#include "plab/cluster.hpp"
#include "plab/error.hpp"
#include "plab/kernels.hpp"
#include "plab/log.hpp"
#include "plab/rng.hpp"

namespace plab {

std::vector<SearchHit> select_top_k(std::span<const double> scores, std::span<const std::string> ids, std::size_t k) {
  if (k == 0) throw InvalidArgument("search: k must be >= 1");
  std::vector<std::uint32_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0u);
  const auto before = [&](std::uint32_t a, std::uint32_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  };
  const std::size_t take = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), before);
  std::vector<SearchHit> hits;
  hits.reserve(take);
  for (std::size_t r = 0; r < take; ++r) hits.push_back({ids[order[r]], scores[order[r]], r + 1});
  return hits;
}

namespace {

void check_unique(std::span<const std::string> ids) {
  std::unordered_set<std::string_view> seen;
  seen.reserve(ids.size());
  for (const auto& id : ids)
    if (!seen.insert(id).second) throw DataError("duplicate id '" + id + "' in index");
}

void check_finite(const Matrix& m) {
  for (double x : m.data)
    if (!std::isfinite(x)) throw DataError("index vectors must be finite");
}

}  // namespace

// ---- ExactIndex -------------------------------------------------------------

ExactIndex ExactIndex::build(Matrix vectors, std::vector<std::string> ids, Metric metric) {
  if (vectors.rows == 0 || vectors.cols == 0) throw DataError("cannot build an index over an empty corpus");
  if (vectors.data.size() != vectors.rows * vectors.cols) throw DataError("index rows have inconsistent dimension");
  if (ids.size() != vectors.rows)
    throw DataError("index: " + std::to_string(ids.size()) + " ids for " + std::to_string(vectors.rows) + " vectors");
  check_unique(ids);
  check_finite(vectors);
  ExactIndex idx;
  idx.vectors_ = std::move(vectors);
  idx.ids_ = std::move(ids);
  idx.metric_ = metric;
  if (metric == Metric::Cosine) {
    idx.sq_norms_.resize(idx.vectors_.rows);
    for (std::size_t i = 0; i < idx.vectors_.rows; ++i) {
      const auto r = idx.vectors_.row(i);
      idx.sq_norms_[i] = dot(r, r);
    }
  }
  return idx;
}

void ExactIndex::check_query(std::span<const double> q) const {
  if (q.size() != dim())
    throw InvalidArgument("search: query dim " + std::to_string(q.size()) + " != index dim " + std::to_string(dim()));
}

std::vector<double> ExactIndex::finish_cosine(std::span<const double> q, std::vector<double> dots) const {
  if (metric_ != Metric::Cosine) return dots;
  // Same arithmetic as similarity(COSINE).
  const double qn2 = dot(q, q);
  for (std::size_t i = 0; i < dots.size(); ++i)
    dots[i] = (qn2 == 0.0 || sq_norms_[i] == 0.0) ? 0.0 : dots[i] / std::sqrt(qn2 * sq_norms_[i]);
  return dots;
}

std::vector<double> ExactIndex::scores(std::span<const double> q) const {
  check_query(q);
  std::vector<double> out(size());
  kernels::serial::dot_scores(vectors_, q, out);
  return finish_cosine(q, std::move(out));
}

std::vector<double> ExactIndex::scores_parallel(std::span<const double> q) const {
  check_query(q);
  std::vector<double> out(size());
  kernels::omp::dot_scores(vectors_, q, out);
  return finish_cosine(q, std::move(out));
}

std::vector<SearchHit> ExactIndex::search(std::span<const double> q, std::size_t k) const {
  return select_top_k(scores(q), ids_, k);
}

ExactIndex ExactIndex::inject(std::span<const InjectEntry> entries) const {
  if (entries.empty()) return *this;
  Matrix v = vectors_;
  std::vector<std::string> ids = ids_;
  v.data.reserve(v.data.size() + entries.size() * v.cols);
  for (const auto& e : entries) {
    if (e.vector.dim() != v.cols)
      throw DataError("inject: entry '" + e.id + "' has dim " + std::to_string(e.vector.dim()) + ", index dim " +
                      std::to_string(v.cols));
    v.data.insert(v.data.end(), e.vector.values().begin(), e.vector.values().end());
    ++v.rows;
    ids.push_back(e.id);
  }
  return build(std::move(v), std::move(ids), metric_);
}

// ---- PqIndex ----------------------------------------------------------------

PqIndex PqIndex::train(const Matrix& vectors, std::vector<std::string> ids, Metric metric, const PqParams& params) {
  if (vectors.rows == 0) throw DataError("cannot train PQ on an empty corpus");
  if (ids.size() != vectors.rows) throw DataError("pq: ids/vectors length mismatch");
  if (params.m == 0 || vectors.cols % params.m != 0)
    throw InvalidArgument("pq: m=" + std::to_string(params.m) + " does not divide dimension " +
                          std::to_string(vectors.cols));
  if (params.b == 0 || params.b > 16) throw InvalidArgument("pq: b must lie in [1,16]");
  check_unique(ids);
  check_finite(vectors);

  PqIndex idx;
  idx.metric_ = metric;
  idx.m_ = params.m;
  idx.b_ = params.b;
  idx.ksub_ = std::size_t{1} << params.b;
  idx.sub_dim_ = vectors.cols / params.m;
  idx.codebooks_ = Matrix(idx.m_ * idx.ksub_, idx.sub_dim_);
  idx.history_.resize(idx.m_);
  if (idx.ksub_ > vectors.rows)
    warn("pq: 2^b = " + std::to_string(idx.ksub_) + " exceeds corpus size " + std::to_string(vectors.rows) +
         "; codebooks are padded with repeated centroids");

  const std::size_t k = std::min(idx.ksub_, vectors.rows);
  for (std::size_t s = 0; s < idx.m_; ++s) {
    Matrix sub(vectors.rows, idx.sub_dim_);
    for (std::size_t i = 0; i < vectors.rows; ++i) {
      const auto src = vectors.row(i).subspan(s * idx.sub_dim_, idx.sub_dim_);
      std::copy(src.begin(), src.end(), sub.row(i).begin());
    }
    auto cl = kmeans(sub, k, params.iterations, derive_seed(params.seed, s));
    idx.history_[s] = std::move(cl.inertia_history);
    for (std::size_t c = 0; c < idx.ksub_; ++c) {
      const auto src = cl.centroids.row(std::min(c, k - 1));
      std::copy(src.begin(), src.end(), idx.codebooks_.row(s * idx.ksub_ + c).begin());
    }
  }

  idx.ids_ = std::move(ids);
  idx.codes_.resize(vectors.rows * idx.m_);
  idx.recon_norms_.resize(vectors.rows);
  for (std::size_t i = 0; i < vectors.rows; ++i) {
    idx.encode_row(vectors.row(i), idx.codes_.data() + i * idx.m_);
    idx.compute_norm(i);
  }
  return idx;
}

PqIndex PqIndex::from_parts(Metric metric, std::size_t m, std::size_t b, Matrix codebooks,
                            std::vector<std::uint16_t> codes, std::vector<std::string> ids) {
  PqIndex idx;
  idx.metric_ = metric;
  idx.m_ = m;
  idx.b_ = b;
  idx.ksub_ = std::size_t{1} << b;
  if (m == 0 || codebooks.rows != m * idx.ksub_) throw DataError("pq: codebook shape does not match m and b");
  idx.sub_dim_ = codebooks.cols;
  idx.codebooks_ = std::move(codebooks);
  if (codes.size() != ids.size() * m) throw DataError("pq: code count does not match ids");
  for (auto c : codes)
    if (c >= idx.ksub_) throw DataError("pq: code out of range");
  check_unique(ids);
  idx.codes_ = std::move(codes);
  idx.ids_ = std::move(ids);
  idx.recon_norms_.resize(idx.ids_.size());
  for (std::size_t i = 0; i < idx.ids_.size(); ++i) idx.compute_norm(i);
  return idx;
}

void PqIndex::encode_row(std::span<const double> v, std::uint16_t* out) const {
  for (std::size_t s = 0; s < m_; ++s) {
    const auto sub = v.subspan(s * sub_dim_, sub_dim_);
    std::size_t best = 0;
    double best_d = 0.0;
    for (std::size_t c = 0; c < ksub_; ++c) {
      const auto cb = codebooks_.row(s * ksub_ + c);
      double d = 0.0;
      for (std::size_t j = 0; j < sub_dim_; ++j) {
        const double t = sub[j] - cb[j];
        d += t * t;
      }
      if (c == 0 || d < best_d) {
        best_d = d;
        best = c;
      }
    }
    out[s] = static_cast<std::uint16_t>(best);
  }
}

void PqIndex::compute_norm(std::size_t row) {
  double ss = 0.0;
  for (std::size_t s = 0; s < m_; ++s)
    for (double x : codebooks_.row(s * ksub_ + codes_[row * m_ + s])) ss += x * x;
  recon_norms_[row] = std::sqrt(ss);
}

std::vector<double> PqIndex::adc_table(std::span<const double> q) const {
  if (q.size() != dim())
    throw InvalidArgument("search: query dim " + std::to_string(q.size()) + " != index dim " + std::to_string(dim()));
  std::vector<double> qv(q.begin(), q.end());
  if (metric_ == Metric::Cosine) {
    const double n = norm(qv);
    for (auto& x : qv) x = n == 0.0 ? 0.0 : x / n;
  }
  std::vector<double> table(m_ * ksub_);
  for (std::size_t s = 0; s < m_; ++s) {
    const std::span<const double> qs(qv.data() + s * sub_dim_, sub_dim_);
    for (std::size_t c = 0; c < ksub_; ++c) table[s * ksub_ + c] = dot(qs, codebooks_.row(s * ksub_ + c));
  }
  return table;
}

std::vector<double> PqIndex::scores(std::span<const double> q) const {
  const auto table = adc_table(q);
  std::vector<double> out(size());
  kernels::serial::adc_scan(codes_, m_, table, ksub_, out);
  if (metric_ == Metric::Cosine)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = recon_norms_[i] == 0.0 ? 0.0 : out[i] / recon_norms_[i];
  return out;
}

std::vector<double> PqIndex::scores_parallel(std::span<const double> q) const {
  const auto table = adc_table(q);
  std::vector<double> out(size());
  kernels::omp::adc_scan(codes_, m_, table, ksub_, out);
  if (metric_ == Metric::Cosine)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = recon_norms_[i] == 0.0 ? 0.0 : out[i] / recon_norms_[i];
  return out;
}

std::vector<SearchHit> PqIndex::search(std::span<const double> q, std::size_t k) const {
  return select_top_k(scores(q), ids_, k);
}

Embedding PqIndex::reconstruct(std::size_t row) const {
  if (row >= size())
    throw InvalidArgument("reconstruct: row " + std::to_string(row) + " out of range (size " +
                          std::to_string(size()) + ")");
  std::vector<double> v;
  v.reserve(dim());
  for (std::size_t s = 0; s < m_; ++s) {
    const auto cb = codebooks_.row(s * ksub_ + codes_[row * m_ + s]);
    v.insert(v.end(), cb.begin(), cb.end());
  }
  return Embedding(std::move(v));
}

Matrix PqIndex::reconstruct_all() const {
  Matrix out(size(), dim());
  for (std::size_t i = 0; i < size(); ++i) {
    const auto e = reconstruct(i);
    std::copy(e.values().begin(), e.values().end(), out.row(i).begin());
  }
  return out;
}

PqIndex PqIndex::inject(std::span<const InjectEntry> entries) const {
  if (entries.empty()) return *this;
  PqIndex out = *this;
  std::unordered_set<std::string_view> seen(ids_.begin(), ids_.end());
  for (const auto& e : entries) {
    if (e.vector.dim() != dim())
      throw DataError("inject: entry '" + e.id + "' has dim " + std::to_string(e.vector.dim()) + ", index dim " +
                      std::to_string(dim()));
    if (!seen.insert(e.id).second) throw DataError("inject: id collision on '" + e.id + "'");
  }
  for (const auto& e : entries) {
    const std::size_t row = out.ids_.size();
    out.ids_.push_back(e.id);
    out.codes_.resize(out.codes_.size() + m_);
    out.recon_norms_.push_back(0.0);
    out.encode_row(e.vector.values(), out.codes_.data() + row * m_);
    out.compute_norm(row);
  }
  return out;
}

std::uint64_t PqIndex::byte_size() const noexcept {
  const std::uint64_t code_bytes = (b_ + 7) / 8;
  return size() * m_ * code_bytes + codebooks_.rows * codebooks_.cols * sizeof(float);
}

// ---- VectorIndex ------------------------------------------------------------

std::size_t VectorIndex::size() const {
  return std::visit([](const auto& i) { return i.size(); }, impl_);
}
std::size_t VectorIndex::dim() const {
  return std::visit([](const auto& i) { return i.dim(); }, impl_);
}
Metric VectorIndex::metric() const {
  return std::visit([](const auto& i) { return i.metric(); }, impl_);
}
const std::vector<std::string>& VectorIndex::ids() const {
  return std::visit([](const auto& i) -> const std::vector<std::string>& { return i.ids(); }, impl_);
}
std::vector<double> VectorIndex::scores(std::span<const double> q) const {
  return std::visit([&](const auto& i) { return i.scores(q); }, impl_);
}
std::vector<SearchHit> VectorIndex::search(std::span<const double> q, std::size_t k) const {
  return std::visit([&](const auto& i) { return i.search(q, k); }, impl_);
}
VectorIndex VectorIndex::inject(std::span<const InjectEntry> entries) const {
  return std::visit([&](const auto& i) { return VectorIndex(i.inject(entries)); }, impl_);
}
std::uint64_t VectorIndex::byte_size() const {
  return std::visit([](const auto& i) { return i.byte_size(); }, impl_);
}

// ---- persistence --------------------------------------------------------------

void save_index(const VectorIndex& index, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json meta{{"kind", index.kind()},
                      {"metric", to_string(index.metric())},
                      {"dim", index.dim()},
                      {"count", index.size()}};
  write_ids(dir / "ids.txt", index.ids());
  if (index.is_pq()) {
    const auto& pq = index.pq();
    meta["m"] = pq.m();
    meta["b"] = pq.b();
    write_embedding_dump(dir / "vectors.bin", pq.reconstruct_all());
    write_embedding_dump(dir / "codebooks.bin", pq.codebooks());
    std::ofstream out(dir / "codes.bin", std::ios::binary);
    if (!out) throw DataError("cannot write " + (dir / "codes.bin").string());
    const auto m32 = static_cast<std::uint32_t>(pq.m());
    const auto rows = static_cast<std::uint64_t>(pq.size());
    out.write(reinterpret_cast<const char*>(&m32), sizeof m32);
    out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
    out.write(reinterpret_cast<const char*>(pq.codes().data()),
              static_cast<std::streamsize>(pq.codes().size() * sizeof(std::uint16_t)));
  } else {
    write_embedding_dump(dir / "vectors.bin", index.exact().vectors());
  }
  std::ofstream(dir / "meta.json") << meta.dump(2) << '\n';
}

VectorIndex load_index(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "meta.json");
  if (!mf) throw DataError("missing " + (dir / "meta.json").string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(mf);
  } catch (const nlohmann::json::exception& e) {
    throw DataError((dir / "meta.json").string() + ": " + e.what());
  }
  const Metric metric = parse_metric(meta.at("metric").get<std::string>());
  auto ids = read_ids(dir / "ids.txt");
  if (meta.at("kind") == "exact") return ExactIndex::build(read_embedding_dump(dir / "vectors.bin"), std::move(ids), metric);
  auto codebooks = read_embedding_dump(dir / "codebooks.bin");
  std::ifstream in(dir / "codes.bin", std::ios::binary);
  if (!in) throw DataError("missing " + (dir / "codes.bin").string());
  std::uint32_t m = 0;
  std::uint64_t rows = 0;
  in.read(reinterpret_cast<char*>(&m), sizeof m);
  in.read(reinterpret_cast<char*>(&rows), sizeof rows);
  std::vector<std::uint16_t> codes(rows * m);
  if (!in.read(reinterpret_cast<char*>(codes.data()), static_cast<std::streamsize>(codes.size() * sizeof(std::uint16_t))))
    throw DataError((dir / "codes.bin").string() + ": truncated");
  return PqIndex::from_parts(metric, m, meta.at("b").get<std::size_t>(), std::move(codebooks), std::move(codes),
                             std::move(ids));
}

}  // namespace plab
