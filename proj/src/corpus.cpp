#include "plab/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "plab/error.hpp"
#include "plab/rng.hpp"

namespace plab {

namespace {

// Length in bytes of the Unicode whitespace sequence starting at s[i], or 0.
std::size_t whitespace_len(std::string_view s, std::size_t i) {
  const auto b = [&](std::size_t k) { return static_cast<unsigned char>(s[i + k]); };
  const std::size_t rest = s.size() - i;
  const unsigned char c = b(0);
  if (c == ' ' || (c >= 0x09 && c <= 0x0D)) return 1;
  if (c == 0xC2 && rest >= 2 && (b(1) == 0x85 || b(1) == 0xA0)) return 2;
  if (rest >= 3) {
    if (c == 0xE1 && b(1) == 0x9A && b(2) == 0x80) return 3;  // U+1680
    if (c == 0xE2 && b(1) == 0x80 &&
        (b(2) <= 0x8A || b(2) == 0xA8 || b(2) == 0xA9 || b(2) == 0xAF))
      return 3;  // U+2000..200A, U+2028, U+2029, U+202F
    if (c == 0xE2 && b(1) == 0x81 && b(2) == 0x9F) return 3;  // U+205F
    if (c == 0xE3 && b(1) == 0x80 && b(2) == 0x80) return 3;  // U+3000
  }
  return 0;
}

char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

}  // namespace

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{std::string(kUnkToken)}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.empty() || tokens_.front() != kUnkToken)
    throw InvalidArgument("vocabulary must start with <unk>");
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw InvalidArgument("vocabulary contains an empty token");
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second)
      throw InvalidArgument("duplicate vocabulary token '" + tokens_[i] + "'");
  }
}

TokenId Vocabulary::lookup(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.contains(std::string(token));
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  std::size_t i = 0;
  while (i < text.size()) {
    if (const std::size_t w = whitespace_len(text, i)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
      i += w;
    } else {
      cur.push_back(ascii_lower(text[i]));
      ++i;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<TokenId> tokenize(std::string_view text, const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  for (const auto& w : split_words(text)) ids.push_back(vocab.lookup(w));
  return ids;
}

std::string detokenize(std::span<const TokenId> tokens, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += vocab.token_of(tokens[i]);
  }
  return out;
}

Vocabulary build_vocabulary(std::span<const std::string> texts) {
  std::map<std::string, std::uint64_t> freq;
  for (const auto& t : texts)
    for (auto& w : split_words(t))
      if (w != kUnkToken) ++freq[std::move(w)];
  std::vector<std::pair<std::string, std::uint64_t>> entries(freq.begin(), freq.end());
  // std::map iteration is already ascending by string; stable sort keeps it for ties.
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens{std::string(kUnkToken)};
  tokens.reserve(entries.size() + 1);
  for (auto& [w, _] : entries) tokens.push_back(w);
  return Vocabulary(std::move(tokens));
}

// ---- JSONL ----------------------------------------------------------------

std::vector<Record> read_jsonl(const std::filesystem::path& path, RecordKind kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Record> records;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  const auto fail = [&](const std::string& why) {
    throw DataError(path.string() + ": line " + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(std::string("invalid JSON (") + e.what() + ")");
    }
    if (!j.is_object()) fail("record is not an object");
    if (!j.contains("id") || !j["id"].is_string()) fail("missing string field \"id\"");
    if (!j.contains("text") || !j["text"].is_string()) fail("missing string field \"text\"");
    Record r{j["id"].get<std::string>(), j["text"].get<std::string>(), {}};
    if (kind == RecordKind::Query) {
      if (!j.contains("answers") || !j["answers"].is_array()) fail("missing array field \"answers\"");
      for (const auto& a : j["answers"]) {
        if (!a.is_string() || a.get<std::string>().empty()) fail("answers must be non-empty strings");
        r.answers.push_back(a.get<std::string>());
      }
    }
    if (!seen.insert(r.id).second)
      throw DataError(path.string() + ": duplicate id '" + r.id + "' at line " + std::to_string(lineno));
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<Passage> to_passages(std::span<const Record> records, const Vocabulary& vocab) {
  std::vector<Passage> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.id, r.text, tokenize(r.text, vocab)});
  return out;
}

std::vector<Query> to_queries(std::span<const Record> records, const Vocabulary& vocab) {
  std::vector<Query> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.id, r.text, tokenize(r.text, vocab), r.answers});
  return out;
}

IngestResult ingest_jsonl(const std::filesystem::path& path, RecordKind kind) {
  const auto records = read_jsonl(path, kind);
  std::vector<std::string> texts;
  texts.reserve(records.size());
  for (const auto& r : records) texts.push_back(r.text);
  IngestResult res{build_vocabulary(texts), {}, {}};
  if (kind == RecordKind::Passage)
    res.passages = to_passages(records, res.vocab);
  else
    res.queries = to_queries(records, res.vocab);
  return res;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

}  // namespace

void write_jsonl(const std::filesystem::path& path, std::span<const Passage> passages) {
  auto out = open_out(path);
  for (const auto& p : passages) out << nlohmann::json{{"id", p.id}, {"text", p.text}}.dump() << '\n';
}

void write_jsonl(const std::filesystem::path& path, std::span<const Query> queries) {
  auto out = open_out(path);
  for (const auto& q : queries)
    out << nlohmann::json{{"id", q.id}, {"text", q.text}, {"answers", q.answers}}.dump() << '\n';
}

void write_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab) {
  auto out = open_out(path);
  for (const auto& t : vocab.tokens()) out << t << '\n';
}

Vocabulary read_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  try {
    return Vocabulary(std::move(tokens));
  } catch (const InvalidArgument& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// ---- synthetic benchmark ----------------------------------------------------

void SyntheticSpec::validate() const {
  const auto req = [](bool ok, const char* what) {
    if (!ok) throw InvalidArgument(std::string("synthetic spec: ") + what);
  };
  req(vocab_size >= 2, "vocab_size must be >= 2");
  req(vocab_size <= 1'000'001, "vocab_size must be <= 1000001");
  req(num_passages > 0, "num_passages must be > 0");
  req(num_train_queries > 0, "num_train_queries must be > 0");
  req(num_test_queries > 0, "num_test_queries must be > 0");
  req(passage_len.min > 0 && passage_len.min <= passage_len.max, "passage_len must be a non-empty positive range");
  req(query_len.min > 0 && query_len.min <= query_len.max, "query_len must be a non-empty positive range");
  req(answer_rate >= 0.0 && answer_rate <= 1.0, "answer_rate must lie in [0,1]");
  req(topic_rate >= 0.0 && topic_rate <= 1.0, "topic_rate must lie in [0,1]");
  req(query_copy_rate >= 0.0 && query_topic_rate >= 0.0 && query_copy_rate + query_topic_rate <= 1.0,
      "query_copy_rate + query_topic_rate must lie in [0,1]");
  req(num_topics == 0 || (topic_pool > 0 && topic_pool < vocab_size),
      "topic_pool must lie in [1, vocab_size)");
}

std::string synthetic_word(TokenId id) {
  static constexpr std::string_view kConsonants = "bcdfghjklmnprstvwxyz";
  static constexpr std::string_view kVowels = "aeiou";
  if (id == kUnkId || id > 1'000'000) throw InvalidArgument("synthetic_word: id out of range");
  std::uint32_t x = id - 1;
  std::string w(6, ' ');
  for (int s = 2; s >= 0; --s) {
    const std::uint32_t syl = x % 100;
    x /= 100;
    w[2 * s] = kConsonants[syl / 5];
    w[2 * s + 1] = kVowels[syl % 5];
  }
  return w;
}

namespace {

std::string join_words(std::span<const TokenId> ids, const Vocabulary& vocab) {
  return detokenize(ids, vocab);
}

Query make_query(std::string id, Rng& rng, const SyntheticSpec& spec, const Passage& rel,
                 std::span<const TokenId> pool, const Vocabulary& vocab) {
  const auto draw_len = [&](IntRange r) {
    return r.min + static_cast<std::uint32_t>(rng.uniform_int(r.max - r.min + 1));
  };
  const std::uint32_t len = draw_len(spec.query_len);
  std::vector<TokenId> toks;
  toks.reserve(len);
  for (std::uint32_t t = 0; t < len; ++t) {
    const double u = rng.uniform();
    if (u < spec.query_copy_rate) {
      toks.push_back(rel.tokens[rng.uniform_int(rel.tokens.size())]);
    } else if (u < spec.query_copy_rate + spec.query_topic_rate && !pool.empty()) {
      toks.push_back(pool[rng.uniform_int(pool.size())]);
    } else {
      toks.push_back(static_cast<TokenId>(1 + rng.uniform_int(spec.vocab_size - 1)));
    }
  }
  Query q{std::move(id), join_words(toks, vocab), toks, {}};
  // Always consume the same draws so the stream layout does not depend on answer_rate.
  const double ua = rng.uniform();
  const std::size_t max_span = std::min<std::size_t>(3, rel.tokens.size());
  const std::size_t span = 1 + rng.uniform_int(max_span);
  const std::size_t start = rng.uniform_int(rel.tokens.size() - span + 1);
  if (ua < spec.answer_rate) {
    q.answers.push_back(join_words(std::span(rel.tokens).subspan(start, span), vocab));
  }
  return q;
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<std::string> words{std::string(kUnkToken)};
  words.reserve(spec.vocab_size);
  for (TokenId id = 1; id < spec.vocab_size; ++id) words.push_back(synthetic_word(id));
  SyntheticCorpus c{Vocabulary(std::move(words)), {}, {}, {}, {}};

  // Topic pools: distinct ids drawn uniformly from [1, vocab_size).
  std::vector<std::vector<TokenId>> pools(spec.num_topics);
  {
    Rng rng(derive_seed(spec.seed, 1));
    for (auto& pool : pools) {
      std::unordered_set<TokenId> used;
      while (pool.size() < spec.topic_pool) {
        const auto id = static_cast<TokenId>(1 + rng.uniform_int(spec.vocab_size - 1));
        if (used.insert(id).second) pool.push_back(id);
      }
    }
  }

  std::vector<std::uint32_t> passage_topic(spec.num_passages, 0);
  {
    Rng rng(derive_seed(spec.seed, 2));
    c.passages.reserve(spec.num_passages);
    for (std::uint32_t i = 0; i < spec.num_passages; ++i) {
      const auto topic = spec.num_topics ? static_cast<std::uint32_t>(rng.uniform_int(spec.num_topics)) : 0u;
      passage_topic[i] = topic;
      const std::uint32_t len =
          spec.passage_len.min + static_cast<std::uint32_t>(rng.uniform_int(spec.passage_len.max - spec.passage_len.min + 1));
      std::vector<TokenId> toks;
      toks.reserve(len);
      for (std::uint32_t t = 0; t < len; ++t) {
        const double u = rng.uniform();
        if (spec.num_topics && u < spec.topic_rate) {
          const auto& pool = pools[topic];
          toks.push_back(pool[rng.uniform_int(pool.size())]);
        } else {
          toks.push_back(static_cast<TokenId>(1 + rng.uniform_int(spec.vocab_size - 1)));
        }
      }
      c.passages.push_back({"p" + std::to_string(i), join_words(toks, c.vocab), std::move(toks)});
    }
  }

  const auto make_set = [&](std::uint64_t tag, std::uint32_t count, const std::string& prefix,
                            std::vector<Query>& out, std::vector<std::uint32_t>* relevant) {
    Rng rng(derive_seed(spec.seed, tag));
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
      const auto rel = static_cast<std::uint32_t>(rng.uniform_int(spec.num_passages));
      std::span<const TokenId> pool;
      if (spec.num_topics) pool = pools[passage_topic[rel]];
      out.push_back(make_query(prefix + std::to_string(i), rng, spec, c.passages[rel], pool, c.vocab));
      if (relevant) relevant->push_back(rel);
    }
  };
  make_set(3, spec.num_train_queries, "tq", c.train_queries, nullptr);
  make_set(4, spec.num_test_queries, "q", c.test_queries, &c.test_relevant);
  return c;
}

}  // namespace plab
