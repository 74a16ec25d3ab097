#pragma once

// Static token-table encoders. A text embedding is either the mean of its
// token vectors (MEAN) or the vector of its first token (FIRST, the CLS
// analog). Both are linear in the token table, which is what makes the
// inverter in attack.hpp exact.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "plab/corpus.hpp"
#include "plab/matrix.hpp"

namespace plab {

enum class Pooling { Mean, First };
enum class Metric { Dot, Cosine };

std::string to_string(Pooling p);
std::string to_string(Metric m);
Pooling parse_pooling(std::string_view s);  // "mean" | "first"
Metric parse_metric(std::string_view s);    // "dot" | "cosine"

/// Non-empty vector of finite reals.
class Embedding {
 public:
  Embedding() = default;
  explicit Embedding(std::vector<double> values);

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  bool operator==(const Embedding&) const = default;

 private:
  std::vector<double> values_;
};

struct HashedSource {
  std::uint64_t seed = 42;
};
struct TableSource {
  std::filesystem::path path;
};

struct EmbedderConfig {
  std::size_t dim = 64;
  Pooling pooling = Pooling::Mean;
  Metric metric = Metric::Cosine;
  std::variant<HashedSource, TableSource> source = HashedSource{};
};

/// Hashed token vector: components uniform in (-1,1) from
/// Rng(hash64(token) ^ seed), scaled to unit Euclidean norm.
std::vector<double> hashed_token_vector(std::string_view token, std::uint64_t seed, std::size_t dim);

/// One row per vocabulary id.
class TokenTable {
 public:
  TokenTable() = default;
  explicit TokenTable(Matrix vectors) : vectors_(std::move(vectors)) {}

  std::size_t size() const noexcept { return vectors_.rows; }
  std::size_t dim() const noexcept { return vectors_.cols; }
  std::span<const double> row(TokenId id) const { return vectors_.row(id); }
  const Matrix& matrix() const noexcept { return vectors_; }

 private:
  Matrix vectors_;
};

/// HASHED: computed per token. TABLE: loaded from the word2vec-style text file;
/// a vocabulary token missing from the file is a DataError naming it.
TokenTable build_token_table(const EmbedderConfig& cfg, const Vocabulary& vocab);

Embedding token_vector(TokenId token, const EmbedderConfig& cfg, const Vocabulary& vocab);

/// Pools token vectors. Throws InvalidArgument on an empty sequence.
Embedding embed(std::span<const TokenId> tokens, const EmbedderConfig& cfg, const TokenTable& table);

/// DOT: sum a_i b_i. COSINE: dot / (|a||b|), 0 when either norm is 0.
/// Throws InvalidArgument on dimension mismatch.
double similarity(std::span<const double> a, std::span<const double> b, Metric metric);
inline double similarity(const Embedding& a, const Embedding& b, Metric metric) {
  return similarity(a.values(), b.values(), metric);
}

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

/// Bundles a config with its table and vocabulary.
class Embedder {
 public:
  Embedder(EmbedderConfig cfg, Vocabulary vocab);
  Embedder(EmbedderConfig cfg, Vocabulary vocab, TokenTable table);

  Embedding embed(std::span<const TokenId> tokens) const { return plab::embed(tokens, cfg_, table_); }
  Embedding embed_text(std::string_view text) const { return embed(tokenize(text, vocab_)); }

  const EmbedderConfig& config() const noexcept { return cfg_; }
  const Vocabulary& vocab() const noexcept { return vocab_; }
  const TokenTable& table() const noexcept { return table_; }

 private:
  EmbedderConfig cfg_;
  Vocabulary vocab_;
  TokenTable table_;
};

// ---- files ----------------------------------------------------------------

/// Text table: "<count> <dim>" then "token v1 ... vdim" per line.
void write_table_file(const std::filesystem::path& path, const Vocabulary& vocab, const TokenTable& table);

/// Binary dump: "PLAB", u32 version=1, u32 dim, u64 rows, then rows of f32,
/// all little-endian. Ids go to a sidecar text file, one per line.
void write_embedding_dump(const std::filesystem::path& path, const Matrix& rows);
Matrix read_embedding_dump(const std::filesystem::path& path);
void write_ids(const std::filesystem::path& path, std::span<const std::string> ids);
std::vector<std::string> read_ids(const std::filesystem::path& path);

/// Stacks equal-dimension embeddings into a matrix.
Matrix to_matrix(std::span<const Embedding> rows);
Embedding row_embedding(const Matrix& m, std::size_t i);

}  // namespace plab
