#pragma once

// Text model: vocabulary, whitespace tokenizer, JSONL ingestion and the seeded
// synthetic benchmark generator.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace plab {

using TokenId = std::uint32_t;

inline constexpr TokenId kUnkId = 0;
inline constexpr std::string_view kUnkToken = "<unk>";

class Vocabulary {
 public:
  Vocabulary();  // just `<unk>`

  /// `tokens[0]` must be `<unk>`; tokens must be unique and non-empty.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::string& token_of(TokenId id) const { return tokens_.at(id); }
  /// Unknown strings map to kUnkId.
  TokenId lookup(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

struct Passage {
  std::string id;
  std::string text;
  std::vector<TokenId> tokens;

  bool operator==(const Passage&) const = default;
};

struct Query {
  std::string id;
  std::string text;
  std::vector<TokenId> tokens;
  std::vector<std::string> answers;

  bool operator==(const Query&) const = default;
};

/// Lowercases (ASCII) and splits on Unicode whitespace.
std::vector<std::string> split_words(std::string_view text);

std::vector<TokenId> tokenize(std::string_view text, const Vocabulary& vocab);

/// Space-joined token strings.
std::string detokenize(std::span<const TokenId> tokens, const Vocabulary& vocab);

/// Frequency-descending vocabulary over the words of `texts`; ties by
/// ascending string. Id 0 is always `<unk>`.
Vocabulary build_vocabulary(std::span<const std::string> texts);

// ---- JSONL ----------------------------------------------------------------

enum class RecordKind { Passage, Query };

struct Record {
  std::string id;
  std::string text;
  std::vector<std::string> answers;
};

/// Parses one record per line. Throws DataError naming the 1-based line of a
/// malformed record, or naming a duplicated id.
std::vector<Record> read_jsonl(const std::filesystem::path& path, RecordKind kind);

struct IngestResult {
  Vocabulary vocab;
  std::vector<Passage> passages;  // filled for RecordKind::Passage
  std::vector<Query> queries;     // filled for RecordKind::Query
};

/// Reads a file and builds its vocabulary from the file's own token frequencies.
IngestResult ingest_jsonl(const std::filesystem::path& path, RecordKind kind);

std::vector<Passage> to_passages(std::span<const Record> records, const Vocabulary& vocab);
std::vector<Query> to_queries(std::span<const Record> records, const Vocabulary& vocab);

void write_jsonl(const std::filesystem::path& path, std::span<const Passage> passages);
void write_jsonl(const std::filesystem::path& path, std::span<const Query> queries);

/// One token per line; line 1 is `<unk>`.
void write_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab);
Vocabulary read_vocabulary(const std::filesystem::path& path);

// ---- synthetic benchmark ----------------------------------------------------

struct IntRange {
  std::uint32_t min = 1;
  std::uint32_t max = 1;
};

// Structure of the generated corpus:
//  * `num_topics` topic pools, each `topic_pool` distinct word ids drawn
//    uniformly from the vocabulary;
//  * a passage picks a topic, then each token comes from the topic pool with
//    probability `topic_rate`, otherwise uniformly from the vocabulary;
//  * a query picks a relevant passage; each token is copied from that passage
//    with probability `query_copy_rate`, else drawn from the passage's topic
//    pool with probability `query_topic_rate`, else uniform;
//  * with probability `answer_rate` a query carries one answer: a contiguous
//    span of 1..3 tokens of its relevant passage.
// `num_topics = 0` disables topics (all tokens uniform).
struct SyntheticSpec {
  std::uint64_t seed = 42;
  std::uint32_t vocab_size = 5000;  // includes <unk>
  std::uint32_t num_passages = 10000;
  std::uint32_t num_train_queries = 1000;
  std::uint32_t num_test_queries = 200;
  IntRange passage_len{4, 10};
  IntRange query_len{4, 8};
  double answer_rate = 0.5;
  std::uint32_t num_topics = 20;
  std::uint32_t topic_pool = 100;
  double topic_rate = 0.7;
  double query_copy_rate = 0.5;
  double query_topic_rate = 0.3;

  /// Throws InvalidArgument on the first violated invariant.
  void validate() const;
};

struct SyntheticCorpus {
  Vocabulary vocab;
  std::vector<Passage> passages;
  std::vector<Query> train_queries;
  std::vector<Query> test_queries;
  /// relevant[i] = index of the passage test query i was drawn from.
  std::vector<std::uint32_t> test_relevant;
};

/// Fixed-width pronounceable word for a non-UNK id (ids 1..1'000'000).
std::string synthetic_word(TokenId id);

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

}  // namespace plab
