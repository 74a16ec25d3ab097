#include "plab/embedder.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "plab/error.hpp"
#include "plab/log.hpp"
#include "plab/rng.hpp"

namespace plab {

std::string to_string(Pooling p) { return p == Pooling::Mean ? "mean" : "first"; }
std::string to_string(Metric m) { return m == Metric::Dot ? "dot" : "cosine"; }

Pooling parse_pooling(std::string_view s) {
  if (s == "mean") return Pooling::Mean;
  if (s == "first") return Pooling::First;
  throw InvalidArgument("unknown pooling '" + std::string(s) + "' (expected mean|first)");
}

Metric parse_metric(std::string_view s) {
  if (s == "dot") return Metric::Dot;
  if (s == "cosine") return Metric::Cosine;
  throw InvalidArgument("unknown metric '" + std::string(s) + "' (expected dot|cosine)");
}

Embedding::Embedding(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw InvalidArgument("embedding must have dim > 0");
  for (double v : values_)
    if (!std::isfinite(v)) throw InvalidArgument("embedding component is not finite");
}

std::vector<double> hashed_token_vector(std::string_view token, std::uint64_t seed, std::size_t dim) {
  Rng rng(hash64(token) ^ seed);
  std::vector<double> v(dim);
  double ss = 0.0;
  for (auto& x : v) {
    x = 2.0 * rng.uniform_open() - 1.0;
    ss += x * x;
  }
  const double inv = 1.0 / std::sqrt(ss);
  for (auto& x : v) x *= inv;
  return v;
}

namespace {

Matrix load_table_file(const std::filesystem::path& path, std::size_t dim, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open token table " + path.string());
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::size_t count = 0, file_dim = 0;
  if (!(hs >> count >> file_dim)) throw DataError(path.string() + ": line 1: expected '<count> <dim>'");
  if (file_dim != dim)
    throw DataError(path.string() + ": table dim " + std::to_string(file_dim) + " != configured dim " +
                    std::to_string(dim));
  std::unordered_map<std::string, std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    std::vector<double> v(dim);
    for (auto& x : v)
      if (!(ls >> x) || !std::isfinite(x))
        throw DataError(path.string() + ": line " + std::to_string(lineno) + ": expected " + std::to_string(dim) +
                        " finite reals");
    double extra;
    if (ls >> extra) throw DataError(path.string() + ": line " + std::to_string(lineno) + ": too many values");
    rows[token] = std::move(v);
  }
  if (rows.size() != count)
    throw DataError(path.string() + ": header says " + std::to_string(count) + " rows, found " +
                    std::to_string(rows.size()));
  Matrix m(vocab.size(), dim);
  for (TokenId id = 0; id < vocab.size(); ++id) {
    const auto it = rows.find(vocab.token_of(id));
    if (it == rows.end()) throw DataError(path.string() + ": token '" + vocab.token_of(id) + "' missing from table");
    std::copy(it->second.begin(), it->second.end(), m.row(id).begin());
  }
  return m;
}

}  // namespace

TokenTable build_token_table(const EmbedderConfig& cfg, const Vocabulary& vocab) {
  if (cfg.dim == 0) throw InvalidArgument("embedder dim must be > 0");
  if (const auto* h = std::get_if<HashedSource>(&cfg.source)) {
    Matrix m(vocab.size(), cfg.dim);
    for (TokenId id = 0; id < vocab.size(); ++id) {
      const auto v = hashed_token_vector(vocab.token_of(id), h->seed, cfg.dim);
      std::copy(v.begin(), v.end(), m.row(id).begin());
    }
    return TokenTable(std::move(m));
  }
  return TokenTable(load_table_file(std::get<TableSource>(cfg.source).path, cfg.dim, vocab));
}

Embedding token_vector(TokenId token, const EmbedderConfig& cfg, const Vocabulary& vocab) {
  if (token >= vocab.size()) throw InvalidArgument("token id " + std::to_string(token) + " not in vocabulary");
  if (const auto* h = std::get_if<HashedSource>(&cfg.source))
    return Embedding(hashed_token_vector(vocab.token_of(token), h->seed, cfg.dim));
  const auto table = build_token_table(cfg, vocab);
  const auto r = table.row(token);
  return Embedding({r.begin(), r.end()});
}

Embedding embed(std::span<const TokenId> tokens, const EmbedderConfig& cfg, const TokenTable& table) {
  if (tokens.empty()) throw InvalidArgument("cannot embed an empty token sequence");
  for (TokenId t : tokens)
    if (t >= table.size()) throw InvalidArgument("token id " + std::to_string(t) + " outside token table");
  if (cfg.pooling == Pooling::First) {
    const auto r = table.row(tokens.front());
    return Embedding({r.begin(), r.end()});
  }
  std::vector<double> sum(table.dim(), 0.0);
  for (TokenId t : tokens) {
    const auto r = table.row(t);
    for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += r[j];
  }
  const double n = static_cast<double>(tokens.size());
  for (auto& x : sum) x /= n;
  return Embedding(std::move(sum));
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double similarity(std::span<const double> a, std::span<const double> b, Metric metric) {
  if (a.size() != b.size())
    throw InvalidArgument("similarity: dimension mismatch " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
  const double d = dot(a, b);
  if (metric == Metric::Dot) return d;
  // sqrt(x*x) == x in IEEE arithmetic, so cosine(v, v) is exactly 1.
  const double na2 = dot(a, a), nb2 = dot(b, b);
  if (na2 == 0.0 || nb2 == 0.0) {
    static std::atomic<bool> warned{false};
    warn_once(warned, "cosine similarity with a zero-norm vector; returning 0");
    return 0.0;
  }
  return d / std::sqrt(na2 * nb2);
}

Embedder::Embedder(EmbedderConfig cfg, Vocabulary vocab)
    : cfg_(std::move(cfg)), vocab_(std::move(vocab)), table_(build_token_table(cfg_, vocab_)) {}

Embedder::Embedder(EmbedderConfig cfg, Vocabulary vocab, TokenTable table)
    : cfg_(std::move(cfg)), vocab_(std::move(vocab)), table_(std::move(table)) {
  if (table_.size() != vocab_.size() || table_.dim() != cfg_.dim)
    throw InvalidArgument("token table shape does not match vocabulary/config");
}

// ---- files ----------------------------------------------------------------

void write_table_file(const std::filesystem::path& path, const Vocabulary& vocab, const TokenTable& table) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << table.size() << ' ' << table.dim() << '\n';
  for (TokenId id = 0; id < table.size(); ++id) {
    out << vocab.token_of(id);
    for (double x : table.row(id)) out << ' ' << x;
    out << '\n';
  }
}

namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

constexpr char kMagic[4] = {'P', 'L', 'A', 'B'};
constexpr std::uint32_t kDumpVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw DataError(path.string() + ": truncated embedding dump");
  return v;
}

}  // namespace

void write_embedding_dump(const std::filesystem::path& path, const Matrix& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kDumpVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(rows.cols));
  put<std::uint64_t>(out, rows.rows);
  std::vector<float> buf(rows.cols);
  for (std::size_t i = 0; i < rows.rows; ++i) {
    const auto r = rows.row(i);
    for (std::size_t j = 0; j < rows.cols; ++j) buf[j] = static_cast<float>(r[j]);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
}

Matrix read_embedding_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw DataError(path.string() + ": bad magic");
  const auto version = get<std::uint32_t>(in, path);
  if (version != kDumpVersion) throw DataError(path.string() + ": unsupported version " + std::to_string(version));
  const auto dim = get<std::uint32_t>(in, path);
  const auto count = get<std::uint64_t>(in, path);
  Matrix m(count, dim);
  std::vector<float> buf(dim);
  for (std::size_t i = 0; i < count; ++i) {
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(dim * sizeof(float))))
      throw DataError(path.string() + ": truncated embedding dump");
    auto r = m.row(i);
    for (std::size_t j = 0; j < dim; ++j) r[j] = buf[j];
  }
  return m;
}

void write_ids(const std::filesystem::path& path, std::span<const std::string> ids) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& id : ids) out << id << '\n';
}

std::vector<std::string> read_ids(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) ids.push_back(line);
  return ids;
}

Matrix to_matrix(std::span<const Embedding> rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().dim());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].dim() != m.cols) throw InvalidArgument("to_matrix: dimension mismatch at row " + std::to_string(i));
    std::copy(rows[i].values().begin(), rows[i].values().end(), m.row(i).begin());
  }
  return m;
}

Embedding row_embedding(const Matrix& m, std::size_t i) {
  const auto r = m.row(i);
  return Embedding({r.begin(), r.end()});
}

}  // namespace plab
