#include "plab/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "plab/error.hpp"
#include "plab/rng.hpp"

namespace plab {

using nlohmann::json;

// ---- config parsing -------------------------------------------------------

namespace {

std::string join(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

// JSON built in code stores small non-negative ints as signed.
bool non_negative_int(const json& x) {
  return x.is_number_unsigned() || (x.is_number_integer() && x.get<std::int64_t>() >= 0);
}

/// Typed field reader over one JSON object; finish() rejects unread keys.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "must be an object");
  }

  bool has(std::string_view key) const { return j_.contains(key); }

  const json* raw(std::string_view key) {
    seen_.insert(std::string(key));
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::uint64_t uint(std::string_view key, std::uint64_t def) {
    const json* v = raw(key);
    if (!v) return def;
    if (!non_negative_int(*v))
      throw ConfigError(join(path_, key), "must be a non-negative integer");
    return v->get<std::uint64_t>();
  }

  std::uint64_t positive(std::string_view key, std::uint64_t def) {
    const auto x = uint(key, def);
    if (x == 0) throw ConfigError(join(path_, key), "must be >= 1");
    return x;
  }

  double number(std::string_view key, double def) {
    const json* v = raw(key);
    if (!v) return def;
    if (!v->is_number()) throw ConfigError(join(path_, key), "must be a number");
    const double x = v->get<double>();
    if (!std::isfinite(x)) throw ConfigError(join(path_, key), "must be finite");
    return x;
  }

  double fraction(std::string_view key, double def) {
    const double x = number(key, def);
    if (x < 0.0 || x > 1.0) throw ConfigError(join(path_, key), "must lie in [0, 1]");
    return x;
  }

  std::string string(std::string_view key, const std::string& def) {
    const json* v = raw(key);
    if (!v) return def;
    if (!v->is_string()) throw ConfigError(join(path_, key), "must be a string");
    return v->get<std::string>();
  }

  std::string required_string(std::string_view key) {
    if (!has(key)) throw ConfigError(join(path_, key), "required field missing");
    return string(key, "");
  }

  template <class T, class Parse>
  T choice(std::string_view key, T def, Parse parse) {
    const json* v = raw(key);
    if (!v) return def;
    if (!v->is_string()) throw ConfigError(join(path_, key), "must be a string");
    try {
      return parse(v->get<std::string>());
    } catch (const InvalidArgument& e) {
      throw ConfigError(join(path_, key), e.what());
    }
  }

  IntRange range(std::string_view key, IntRange def) {
    const json* v = raw(key);
    if (!v) return def;
    const auto p = join(path_, key);
    if (!v->is_array() || v->size() != 2) throw ConfigError(p, "must be [min, max]");
    IntRange r;
    for (std::size_t i = 0; i < 2; ++i) {
      const auto& x = (*v)[i];
      if (!non_negative_int(x) || x.get<std::uint64_t>() > 0xFFFFFFFFull)
        throw ConfigError(p + "[" + std::to_string(i) + "]", "must be a non-negative integer");
      (i == 0 ? r.min : r.max) = x.get<std::uint32_t>();
    }
    if (r.min == 0 || r.min > r.max) throw ConfigError(p, "must be a non-empty positive range");
    return r;
  }

  std::vector<std::size_t> counts(std::string_view key, const std::vector<std::size_t>& def) {
    const json* v = raw(key);
    if (!v) return def;
    const auto p = join(path_, key);
    if (!v->is_array() || v->empty()) throw ConfigError(p, "must be a non-empty array of positive integers");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      const auto& x = (*v)[i];
      if (!non_negative_int(x) || x.get<std::uint64_t>() == 0)
        throw ConfigError(p + "[" + std::to_string(i) + "]", "must be a positive integer");
      out.push_back(x.get<std::size_t>());
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.contains(it.key())) throw ConfigError(join(path_, it.key()), "unknown field");
  }

  const std::string& path() const { return path_; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::uint32_t u32(Fields& f, std::string_view key, std::uint32_t def) {
  const auto x = f.uint(key, def);
  if (x > 0xFFFFFFFFull) throw ConfigError(join(f.path(), key), "too large");
  return static_cast<std::uint32_t>(x);
}

const json kEmptyObject = json::object();

const json& child(Fields& f, std::string_view key) {
  const json* v = f.raw(key);
  return v ? *v : kEmptyObject;
}

SyntheticSpec parse_synthetic(const json& j, const std::string& path, std::uint64_t seed) {
  Fields f(j, path);
  SyntheticSpec s;
  s.seed = f.uint("seed", seed);
  s.vocab_size = u32(f, "vocab_size", s.vocab_size);
  s.num_passages = u32(f, "num_passages", s.num_passages);
  s.num_train_queries = u32(f, "num_train_queries", s.num_train_queries);
  s.num_test_queries = u32(f, "num_test_queries", s.num_test_queries);
  s.passage_len = f.range("passage_len", s.passage_len);
  s.query_len = f.range("query_len", s.query_len);
  s.answer_rate = f.fraction("answer_rate", s.answer_rate);
  s.num_topics = u32(f, "num_topics", s.num_topics);
  s.topic_pool = u32(f, "topic_pool", s.topic_pool);
  s.topic_rate = f.fraction("topic_rate", s.topic_rate);
  s.query_copy_rate = f.fraction("query_copy_rate", s.query_copy_rate);
  s.query_topic_rate = f.fraction("query_topic_rate", s.query_topic_rate);
  f.finish();
  try {
    s.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(path, e.what());
  }
  return s;
}

InversionBudget parse_budget(const json& j, const std::string& path, std::uint64_t seed) {
  Fields f(j, path);
  InversionBudget b;
  b.passage_len = f.positive("passage_len", b.passage_len);
  b.max_sweeps = f.positive("max_sweeps", b.max_sweeps);
  b.restarts = f.positive("restarts", b.restarts);
  b.seed = f.uint("seed", seed);
  f.finish();
  return b;
}

json budget_json(const InversionBudget& b, bool with_len = true) {
  json j{{"max_sweeps", b.max_sweeps}, {"restarts", b.restarts}, {"seed", b.seed}};
  if (with_len) j["passage_len"] = b.passage_len;
  return j;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::size_t train_query_count(const ExperimentConfig& cfg) {
  if (const auto* s = std::get_if<SyntheticSpec>(&cfg.corpus)) return s->num_train_queries;
  return 0;  // known only after ingestion
}

}  // namespace

ExperimentConfig parse_config(const json& j, const std::filesystem::path& base_dir) {
  ExperimentConfig cfg;
  cfg.base_dir = base_dir;
  Fields root(j, "");
  cfg.seed = root.uint("seed", cfg.seed);

  {
    const json& cj = child(root, "corpus");
    Fields f(cj, "corpus");
    const bool files = f.has("passages") || f.has("train_queries") || f.has("test_queries");
    if (files && f.has("synthetic"))
      throw ConfigError("corpus", "give either `synthetic` or the three JSONL paths, not both");
    if (files) {
      CorpusFiles c;
      c.passages = f.required_string("passages");
      c.train_queries = f.required_string("train_queries");
      c.test_queries = f.required_string("test_queries");
      for (const auto& [key, p] : {std::pair{"passages", &c.passages}, std::pair{"train_queries", &c.train_queries},
                                   std::pair{"test_queries", &c.test_queries}})
        if (!std::filesystem::exists(resolve(base_dir, *p)))
          throw ConfigError(std::string("corpus.") + key, "file not found: " + resolve(base_dir, *p).string());
      cfg.corpus = c;
    } else {
      cfg.corpus = parse_synthetic(child(f, "synthetic"), "corpus.synthetic", cfg.seed);
    }
    f.finish();
  }

  {
    Fields f(child(root, "embedder"), "embedder");
    cfg.embedder.dim = f.positive("dim", cfg.embedder.dim);
    cfg.embedder.pooling = f.choice("pooling", cfg.embedder.pooling, parse_pooling);
    cfg.embedder.metric = f.choice("metric", cfg.embedder.metric, parse_metric);
    Fields s(child(f, "source"), "embedder.source");
    const auto kind = s.string("kind", "hashed");
    if (kind == "hashed") {
      cfg.embedder.source = HashedSource{s.uint("seed", cfg.seed)};
    } else if (kind == "table") {
      const auto p = s.required_string("path");
      if (!std::filesystem::exists(resolve(base_dir, p)))
        throw ConfigError("embedder.source.path", "file not found: " + resolve(base_dir, p).string());
      cfg.embedder.source = TableSource{p};
    } else {
      throw ConfigError("embedder.source.kind", "unknown source '" + kind + "' (expected hashed|table)");
    }
    s.finish();
    f.finish();
  }

  std::size_t out_dim = cfg.embedder.dim;
  if (const json* d = root.raw("defense")) {
    if (!d->is_array()) throw ConfigError("defense", "must be an array of stages");
    for (std::size_t i = 0; i < d->size(); ++i)
      cfg.defense.push_back(stage_from_json((*d)[i], "defense[" + std::to_string(i) + "]"));
    out_dim = DefensePipeline(cfg.defense, cfg.embedder.dim).output_dim();
  }

  {
    Fields f(child(root, "index"), "index");
    const auto kind = f.string("kind", "exact");
    if (kind == "exact") {
      cfg.index.kind = IndexKind::Exact;
    } else if (kind == "pq") {
      cfg.index.kind = IndexKind::Pq;
      auto& pq = cfg.index.pq;
      pq.m = f.positive("m", pq.m);
      pq.b = f.positive("b", pq.b);
      pq.iterations = f.positive("iterations", pq.iterations);
      pq.seed = f.uint("seed", cfg.seed);
      if (out_dim % pq.m != 0)
        throw ConfigError("index.m", "m = " + std::to_string(pq.m) + " does not divide the embedding dimension " +
                                         std::to_string(out_dim));
      if (pq.b > 16) throw ConfigError("index.b", "must be <= 16");
    } else {
      throw ConfigError("index.kind", "unknown index kind '" + kind + "' (expected exact|pq)");
    }
    f.finish();
  }

  {
    Fields f(child(root, "attack"), "attack");
    auto& a = cfg.attack;
    a.mode = f.choice("mode", a.mode, parse_attack_mode);
    a.k = f.positive("k", a.k);
    a.max_iters = f.positive("max_iters", a.max_iters);
    a.seed = f.uint("seed", cfg.seed);
    a.objective = f.choice("objective", cfg.embedder.metric, parse_metric);
    a.budget = parse_budget(child(f, "budget"), "attack.budget", cfg.seed);
    if (const json* p = f.raw("prefix_tokens")) {
      if (!p->is_array()) throw ConfigError("attack.prefix_tokens", "must be an array of strings");
      for (std::size_t i = 0; i < p->size(); ++i) {
        if (!(*p)[i].is_string() || (*p)[i].get<std::string>().empty())
          throw ConfigError("attack.prefix_tokens[" + std::to_string(i) + "]", "must be a non-empty string");
        a.prefix_tokens.push_back((*p)[i].get<std::string>());
      }
      if (a.prefix_tokens.size() > a.budget.passage_len)
        throw ConfigError("attack.prefix_tokens", "longer than attack.budget.passage_len");
    }
    if (const auto n = train_query_count(cfg); n != 0 && a.k > n)
      throw ConfigError("attack.k", "k = " + std::to_string(a.k) + " exceeds the " + std::to_string(n) +
                                        " training queries");
    f.finish();
  }

  {
    Fields f(child(root, "eval"), "eval");
    auto& e = cfg.eval;
    e.ns = f.counts("ns", e.ns);
    e.ks = f.counts("ks", e.ks);
    e.recon_sample = f.uint("recon_sample", e.recon_sample);
    e.recon_seed = f.uint("recon_seed", cfg.seed);
    e.recon_objective = f.choice("recon_objective", e.recon_objective, parse_metric);
    {
      Fields b(child(f, "recon_budget"), "eval.recon_budget");
      e.recon_budget.max_sweeps = b.positive("max_sweeps", e.recon_budget.max_sweeps);
      e.recon_budget.restarts = b.positive("restarts", e.recon_budget.restarts);
      e.recon_budget.seed = b.uint("seed", cfg.seed);
      b.finish();
    }
    f.finish();
  }
  root.finish();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("<file>", path.string() + ": invalid JSON: " + e.what());
  }
  return parse_config(j, path.parent_path());
}

json to_json(const ExperimentConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  if (const auto* s = std::get_if<SyntheticSpec>(&cfg.corpus)) {
    j["corpus"]["synthetic"] = {{"seed", s->seed},
                                {"vocab_size", s->vocab_size},
                                {"num_passages", s->num_passages},
                                {"num_train_queries", s->num_train_queries},
                                {"num_test_queries", s->num_test_queries},
                                {"passage_len", {s->passage_len.min, s->passage_len.max}},
                                {"query_len", {s->query_len.min, s->query_len.max}},
                                {"answer_rate", s->answer_rate},
                                {"num_topics", s->num_topics},
                                {"topic_pool", s->topic_pool},
                                {"topic_rate", s->topic_rate},
                                {"query_copy_rate", s->query_copy_rate},
                                {"query_topic_rate", s->query_topic_rate}};
  } else {
    const auto& c = std::get<CorpusFiles>(cfg.corpus);
    j["corpus"] = {{"passages", c.passages}, {"train_queries", c.train_queries}, {"test_queries", c.test_queries}};
  }
  j["embedder"] = {{"dim", cfg.embedder.dim},
                   {"pooling", to_string(cfg.embedder.pooling)},
                   {"metric", to_string(cfg.embedder.metric)}};
  if (const auto* h = std::get_if<HashedSource>(&cfg.embedder.source))
    j["embedder"]["source"] = {{"kind", "hashed"}, {"seed", h->seed}};
  else
    j["embedder"]["source"] = {{"kind", "table"}, {"path", std::get<TableSource>(cfg.embedder.source).path.string()}};
  j["defense"] = json::array();
  for (const auto& s : cfg.defense) j["defense"].push_back(to_json(s));
  if (cfg.index.kind == IndexKind::Exact) {
    j["index"] = {{"kind", "exact"}};
  } else {
    const auto& pq = cfg.index.pq;
    j["index"] = {{"kind", "pq"}, {"m", pq.m}, {"b", pq.b}, {"iterations", pq.iterations}, {"seed", pq.seed}};
  }
  const auto& a = cfg.attack;
  j["attack"] = {{"mode", to_string(a.mode)},          {"k", a.k},
                 {"max_iters", a.max_iters},           {"seed", a.seed},
                 {"objective", to_string(a.objective)}, {"budget", budget_json(a.budget)},
                 {"prefix_tokens", a.prefix_tokens}};
  const auto& e = cfg.eval;
  j["eval"] = {{"ns", e.ns},
               {"ks", e.ks},
               {"recon_sample", e.recon_sample},
               {"recon_seed", e.recon_seed},
               {"recon_objective", to_string(e.recon_objective)},
               {"recon_budget", budget_json(e.recon_budget, false)}};
  return j;
}

// ---- pipeline ------------------------------------------------------------

std::vector<std::string> World::passage_ids() const {
  std::vector<std::string> ids;
  ids.reserve(passages.size());
  for (const auto& p : passages) ids.push_back(p.id);
  return ids;
}

namespace {

template <class Item>
Matrix embed_all(const Embedder& embedder, const DefensePipeline& pipeline, std::span<const Item> items, Side side,
                 const char* what) {
  Matrix out(items.size(), pipeline.output_dim());
  const auto n = static_cast<std::ptrdiff_t>(items.size());
  std::string error;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    if (items[i].tokens.empty()) {
#pragma omp critical(plab_embed_error)
      if (error.empty()) error = std::string(what) + " '" + items[i].id + "' has no tokens";
      continue;
    }
    const auto e = pipeline.apply(embedder.embed(items[i].tokens), items[i].id, side);
    std::copy(e.values().begin(), e.values().end(), out.row(i).begin());
  }
  if (!error.empty()) throw DataError(error);
  return out;
}

}  // namespace

CorpusData load_corpus(const ExperimentConfig& cfg) {
  CorpusData d;
  auto& vocab = d.vocab;
  auto& passages = d.passages;
  auto& train = d.train_queries;
  auto& test = d.test_queries;
  if (const auto* s = std::get_if<SyntheticSpec>(&cfg.corpus)) {
    auto c = generate_synthetic(*s);
    vocab = std::move(c.vocab);
    passages = std::move(c.passages);
    train = std::move(c.train_queries);
    test = std::move(c.test_queries);
  } else {
    const auto& files = std::get<CorpusFiles>(cfg.corpus);
    const auto pr = read_jsonl(resolve(cfg.base_dir, files.passages), RecordKind::Passage);
    const auto tr = read_jsonl(resolve(cfg.base_dir, files.train_queries), RecordKind::Query);
    const auto te = read_jsonl(resolve(cfg.base_dir, files.test_queries), RecordKind::Query);
    std::vector<std::string> texts;
    for (const auto* rs : {&pr, &tr, &te})
      for (const auto& r : *rs) texts.push_back(r.text);
    vocab = build_vocabulary(texts);
    passages = to_passages(pr, vocab);
    train = to_queries(tr, vocab);
    test = to_queries(te, vocab);
    if (passages.empty() || train.empty() || test.empty()) throw DataError("corpus files must all be non-empty");
    if (cfg.attack.k > train.size())
      throw ConfigError("attack.k", "k = " + std::to_string(cfg.attack.k) + " exceeds the " +
                                        std::to_string(train.size()) + " training queries");
  }
  for (std::size_t i = 0; i < cfg.attack.prefix_tokens.size(); ++i)
    if (!vocab.contains(cfg.attack.prefix_tokens[i]))
      throw ConfigError("attack.prefix_tokens[" + std::to_string(i) + "]",
                        "token '" + cfg.attack.prefix_tokens[i] + "' not in the vocabulary");
  return d;
}

World build_world(const ExperimentConfig& cfg) {
  auto [vocab, passages, train, test] = load_corpus(cfg);
  Embedder embedder(cfg.embedder, std::move(vocab));
  DefensePipeline pipeline(cfg.defense, cfg.embedder.dim);
  Matrix corpus = embed_all<Passage>(embedder, pipeline, passages, Side::Corpus, "passage");
  Matrix train_m = embed_all<Query>(embedder, pipeline, train, Side::Query, "query");
  Matrix test_m = embed_all<Query>(embedder, pipeline, test, Side::Query, "query");

  std::vector<std::string> ids;
  ids.reserve(passages.size());
  for (const auto& p : passages) ids.push_back(p.id);
  VectorIndex index;
  if (cfg.index.kind == IndexKind::Exact)
    index = ExactIndex::build(corpus, std::move(ids), cfg.embedder.metric);
  else
    index = PqIndex::train(corpus, std::move(ids), cfg.embedder.metric, cfg.index.pq);

  return World{std::move(passages), std::move(train), std::move(test),      std::move(embedder),
               std::move(pipeline), std::move(corpus), std::move(train_m), std::move(test_m),
               std::move(index)};
}

Clustering cluster_queries(const ExperimentConfig& cfg, const World& world) {
  const Matrix points = cfg.embedder.metric == Metric::Cosine ? normalize_rows(world.train) : world.train;
  return kmeans(points, cfg.attack.k, cfg.attack.max_iters, cfg.attack.seed);
}

PoisonedIndex attack(const ExperimentConfig& cfg, const World& world, const Clustering& clustering) {
  InversionInputs in;
  in.embedder = &world.embedder;
  in.pipeline = &world.pipeline;
  in.objective = cfg.attack.objective;
  in.budget = cfg.attack.budget;
  for (const auto& t : cfg.attack.prefix_tokens) in.prefix.push_back(world.embedder.vocab().lookup(t));
  return run_attack(cfg.attack.mode, clustering, world.index, in);
}

RetrievalReport retrieval(const ExperimentConfig& cfg, const World& world) {
  std::unordered_map<std::string, std::string> texts;
  texts.reserve(world.passages.size());
  for (const auto& p : world.passages) texts.emplace(p.id, p.text);
  return topk_accuracy(world.index, world.test, world.test_queries, texts, cfg.eval.ks);
}

ReconReport reconstruction(const ExperimentConfig& cfg, const World& world) {
  const auto idx = sample_indices(world.passages.size(), cfg.eval.recon_sample, cfg.eval.recon_seed);
  std::vector<Passage> sample;
  Matrix targets(idx.size(), world.index.dim());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    sample.push_back(world.passages[idx[i]]);
    if (world.index.is_pq()) {
      const auto e = world.index.pq().reconstruct(idx[i]);
      std::copy(e.values().begin(), e.values().end(), targets.row(i).begin());
    } else {
      const auto row = world.corpus.row(idx[i]);
      std::copy(row.begin(), row.end(), targets.row(i).begin());
    }
  }
  const Inverter attacker(attacker_table(world.embedder.table(), world.pipeline), cfg.embedder.pooling,
                          cfg.eval.recon_objective);
  return recon_suite(sample, targets, attacker, cfg.eval.recon_budget, world.embedder);
}

RunResult run_experiment(const ExperimentConfig& cfg, const World& world) {
  RunResult r;
  r.clustering = cluster_queries(cfg, world);
  auto poisoned = attack(cfg, world, r.clustering);
  r.attack = std::move(poisoned.result);
  r.poisoned_size = poisoned.index.size();
  const auto ids = r.attack.ids();
  r.poison = success_at_n(poisoned.index, world.test, {ids.begin(), ids.end()}, cfg.eval.ns);
  r.poison.k = cfg.attack.k;
  r.poison.mode = cfg.attack.mode;
  r.retrieval = retrieval(cfg, world);
  if (cfg.eval.recon_sample > 0) r.recon = reconstruction(cfg, world);
  return r;
}

RunResult run_experiment(const ExperimentConfig& cfg) { return run_experiment(cfg, build_world(cfg)); }

// ---- reports --------------------------------------------------------------

namespace {

std::string describe_defense(std::span<const DefenseStage> stages) {
  if (stages.empty()) return "none";
  std::string out;
  for (const auto& s : stages) {
    if (!out.empty()) out += " > ";
    std::ostringstream os;
    if (const auto* n = std::get_if<NoiseConfig>(&s))
      os << "noise(" << n->lambda << ")";
    else if (const auto* t = std::get_if<TransformConfig>(&s))
      os << "transform(" << t->scale << ")";
    else
      os << "project(" << std::get<ProjectConfig>(s).target_dim << ")";
    out += os.str();
  }
  return out;
}

std::string fmt(double x, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

std::size_t display_width(const std::string& s) {
  std::size_t w = 0;
  for (unsigned char c : s)
    if ((c & 0xC0) != 0x80) ++w;
  return w;
}

std::string markdown_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size(), 3);
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = std::max(width[c], display_width(header[c]));
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], display_width(r[c]));
  const auto line = [&](const std::vector<std::string>& cells) {
    std::string out = "|";
    for (std::size_t c = 0; c < header.size(); ++c) {
      const std::string& cell = c < cells.size() ? cells[c] : std::string();
      out += ' ' + cell + std::string(width[c] - display_width(cell), ' ') + " |";
    }
    return out + '\n';
  };
  std::string out = line(header);
  out += "|";
  for (std::size_t c = 0; c < header.size(); ++c) out += std::string(width[c] + 2, '-') + "|";
  out += '\n';
  for (const auto& r : rows) out += line(r);
  return out;
}

// Numeric-keyed metric map stored as {"10": x, ...}; returns (n, x) by n.
std::vector<std::pair<std::size_t, double>> numeric_map(const json& j) {
  std::vector<std::pair<std::size_t, double>> out;
  if (!j.is_object()) return out;
  for (auto it = j.begin(); it != j.end(); ++it) out.emplace_back(std::stoull(it.key()), it.value().get<double>());
  std::sort(out.begin(), out.end());
  return out;
}

const json kNull;

// j[a][b] without asserting on missing keys.
const json& sub(const json& j, const char* a, const char* b) {
  if (!j.is_object() || !j.contains(a) || !j[a].is_object() || !j[a].contains(b)) return kNull;
  return j[a][b];
}

template <class Map>
json keyed(const Map& m) {
  json j = json::object();
  for (const auto& [k, v] : m) j[std::to_string(k)] = v;
  return j;
}

}  // namespace

json report_json(const ExperimentConfig& cfg, const World& world, const RunResult& run) {
  json j;
  j["config"] = to_json(cfg);
  j["defense"] = describe_defense(cfg.defense);
  j["corpus"] = {{"passages", world.passages.size()},
                 {"train_queries", world.train_queries.size()},
                 {"test_queries", world.test_queries.size()},
                 {"vocab_size", world.embedder.vocab().size()}};
  j["index"] = {{"kind", world.index.kind()},
                {"size", world.index.size()},
                {"dim", world.index.dim()},
                {"bytes", world.index.byte_size()},
                {"poisoned_size", run.poisoned_size}};
  j["clustering"] = {{"k", run.clustering.k},
                     {"inertia", run.clustering.inertia},
                     {"iterations", run.clustering.iterations}};
  double mean_sim = 0.0;
  for (const auto& e : run.attack.entries) mean_sim += e.target_similarity;
  if (!run.attack.entries.empty()) mean_sim /= static_cast<double>(run.attack.entries.size());
  j["attack"] = {{"mode", to_string(run.attack.mode)},
                 {"k", run.attack.k},
                 {"entries", run.attack.entries.size()},
                 {"mean_target_similarity", mean_sim}};
  j["poison"] = {{"success_at", keyed(run.poison.success_at)}};
  j["retrieval"] = {{"accuracy_at", keyed(run.retrieval.accuracy_at)}, {"evaluated", run.retrieval.evaluated}};
  if (run.recon)
    j["recon"] = {{"bleu", run.recon->bleu},
                  {"token_f1", run.recon->token_f1},
                  {"exact", run.recon->exact},
                  {"cos", run.recon->cos},
                  {"samples", run.recon->samples.size()}};
  else
    j["recon"] = nullptr;
  return j;
}

std::string report_markdown(const json& r) {
  std::string out = "# Run report\n\n";
  out += markdown_table({"passages", "index", "dim", "metric", "pooling", "defense"},
                        {{std::to_string(r["corpus"]["passages"].get<std::size_t>()),
                          r["index"]["kind"].get<std::string>(), std::to_string(r["index"]["dim"].get<std::size_t>()),
                          r["config"]["embedder"]["metric"].get<std::string>(),
                          r["config"]["embedder"]["pooling"].get<std::string>(), r["defense"].get<std::string>()}});

  out += "\n## Poisoning\n\n";
  std::vector<std::string> h{"k", "mode", "target sim"};
  std::vector<std::string> row{std::to_string(r["attack"]["k"].get<std::size_t>()), r["attack"]["mode"].get<std::string>(),
                               fmt(r["attack"]["mean_target_similarity"].get<double>())};
  for (const auto& [n, x] : numeric_map(r["poison"]["success_at"])) {
    h.push_back("success@" + std::to_string(n));
    row.push_back(fmt(x));
  }
  out += markdown_table(h, {row});

  out += "\n## Retrieval\n\n";
  h = {"queries"};
  row = {std::to_string(r["retrieval"]["evaluated"].get<std::size_t>())};
  for (const auto& [k, x] : numeric_map(r["retrieval"]["accuracy_at"])) {
    h.push_back("accuracy@" + std::to_string(k));
    row.push_back(fmt(x));
  }
  out += markdown_table(h, {row});

  out += "\n## Reconstruction\n\n";
  if (r["recon"].is_null()) {
    out += "Not run (eval.recon_sample = 0).\n";
  } else {
    const auto& c = r["recon"];
    out += markdown_table({"samples", "BLEU", "token F1", "exact", "cos"},
                          {{std::to_string(c["samples"].get<std::size_t>()), fmt(c["bleu"].get<double>(), 2),
                            fmt(c["token_f1"].get<double>()), fmt(c["exact"].get<double>()),
                            fmt(c["cos"].get<double>())}});
  }
  return out;
}

void write_run_outputs(const std::filesystem::path& out_dir, const ExperimentConfig& cfg, const World& world,
                       const RunResult& run) {
  std::filesystem::create_directories(out_dir);
  const auto report = report_json(cfg, world, run);
  {
    std::ofstream out(out_dir / "report.json", std::ios::binary);
    if (!out) throw DataError("cannot write " + (out_dir / "report.json").string());
    out << report.dump(2) << '\n';
  }
  {
    std::ofstream out(out_dir / "report.md", std::ios::binary);
    out << report_markdown(report);
  }
  write_embedding_dump(out_dir / "centroids.bin", run.clustering.centroids);
  std::vector<std::string> cids;
  for (std::size_t c = 0; c < run.clustering.k; ++c) cids.push_back("centroid:" + std::to_string(c));
  write_ids(out_dir / "centroids.ids", cids);
  std::vector<Embedding> vecs;
  for (const auto& e : run.attack.entries) vecs.push_back(e.vector);
  write_embedding_dump(out_dir / "adversarial.bin", to_matrix(vecs));
  write_ids(out_dir / "adversarial.ids", run.attack.ids());
  write_attack_jsonl(out_dir / "attack.jsonl", run.attack, "adversarial.bin");
}

// ---- sweep ----------------------------------------------------------------

ExperimentConfig with_noise(const ExperimentConfig& cfg, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("lambda must be a finite value >= 0");
  ExperimentConfig out = cfg;
  bool found = false;
  for (auto& s : out.defense)
    if (auto* n = std::get_if<NoiseConfig>(&s)) {
      n->lambda = lambda;
      found = true;
    }
  if (!found) out.defense.insert(out.defense.begin(), NoiseConfig{lambda, cfg.seed, false});
  return out;
}

std::vector<SweepRow> sweep_noise(const ExperimentConfig& cfg, std::span<const double> lambdas) {
  if (lambdas.empty()) throw InvalidArgument("sweep-noise: no lambdas given");
  std::vector<SweepRow> rows;
  for (double lambda : lambdas) {
    const auto c = with_noise(cfg, lambda);
    auto run = run_experiment(c);
    rows.push_back({lambda, std::move(run.poison), std::move(run.retrieval), std::move(run.recon)});
  }
  return rows;
}

std::string sweep_csv(const ExperimentConfig& cfg, std::span<const SweepRow> rows) {
  std::ostringstream os;
  os << "lambda";
  for (auto n : cfg.eval.ns) os << ",success@" << n;
  for (auto k : cfg.eval.ks) os << ",accuracy@" << k;
  os << ",bleu,token_f1,exact,cos\n";
  char buf[64];
  const auto num = [&](double x) {
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    os << num(r.lambda);
    for (auto n : cfg.eval.ns) os << ',' << num(r.poison.success_at.at(n));
    for (auto k : cfg.eval.ks) os << ',' << num(r.retrieval.accuracy_at.at(k));
    if (r.recon)
      os << ',' << num(r.recon->bleu) << ',' << num(r.recon->token_f1) << ',' << num(r.recon->exact) << ','
         << num(r.recon->cos);
    else
      os << ",,,,";
    os << '\n';
  }
  return os.str();
}

// ---- merge ----------------------------------------------------------------

std::string merge_reports(std::span<const std::filesystem::path> dirs) {
  struct Run {
    std::string name;
    std::size_t k;
    json report;
  };
  std::vector<Run> runs;
  for (const auto& d : dirs) {
    const auto p = d / "report.json";
    std::ifstream in(p);
    if (!in) throw DataError("no report.json in " + d.string());
    try {
      auto j = json::parse(in);
      const std::size_t k = j.at("attack").at("k").get<std::size_t>();
      runs.push_back({d.filename().empty() ? d.parent_path().filename().string() : d.filename().string(), k,
                      std::move(j)});
    } catch (const json::exception& e) {
      throw DataError(p.string() + ": malformed report: " + e.what());
    }
  }
  std::stable_sort(runs.begin(), runs.end(), [](const Run& a, const Run& b) { return a.k < b.k; });

  std::set<std::size_t> ns, ks;
  bool any_recon = false;
  for (const auto& r : runs) {
    for (const auto& [n, x] : numeric_map(sub(r.report, "poison", "success_at"))) ns.insert(n);
    for (const auto& [k, x] : numeric_map(sub(r.report, "retrieval", "accuracy_at"))) ks.insert(k);
    any_recon = any_recon || (r.report.contains("recon") && r.report["recon"].is_object());
  }
  std::vector<std::string> header{"run", "k", "mode", "index", "defense"};
  for (auto n : ns) header.push_back("success@" + std::to_string(n));
  for (auto k : ks) header.push_back("accuracy@" + std::to_string(k));
  if (any_recon)
    for (const char* m : {"BLEU", "token F1", "exact", "cos"}) header.push_back(m);

  const std::string kMissing = "—";
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : runs) {
    const auto& j = r.report;
    const auto text = [&](const json& v) { return v.is_string() ? v.get<std::string>() : kMissing; };
    std::vector<std::string> row{r.name, std::to_string(r.k), text(sub(j, "attack", "mode")),
                                 text(sub(j, "index", "kind")), j.value("defense", kMissing)};
    const auto succ = numeric_map(sub(j, "poison", "success_at"));
    const auto acc = numeric_map(sub(j, "retrieval", "accuracy_at"));
    const auto lookup = [&](const auto& m, std::size_t key) {
      for (const auto& [k, x] : m)
        if (k == key) return fmt(x);
      return kMissing;
    };
    for (auto n : ns) row.push_back(lookup(succ, n));
    for (auto k : ks) row.push_back(lookup(acc, k));
    if (any_recon) {
      const auto metric = [&](const char* m, int digits) {
        const auto& v = sub(j, "recon", m);
        return v.is_number() ? fmt(v.get<double>(), digits) : kMissing;
      };
      row.push_back(metric("bleu", 2));
      for (const char* m : {"token_f1", "exact", "cos"}) row.push_back(metric(m, 4));
    }
    rows.push_back(std::move(row));
  }
  return markdown_table(header, rows);
}

}  // namespace plab
