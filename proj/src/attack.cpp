#include "plab/attack.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "plab/error.hpp"
#include "plab/kernels.hpp"
#include "plab/rng.hpp"

namespace plab {

void InversionBudget::validate() const {
  if (passage_len == 0 || max_sweeps == 0 || restarts == 0)
    throw InvalidArgument("inversion budget: passage_len, max_sweeps and restarts must all be >= 1");
}

struct Inverter::Workspace {
  std::vector<double> rest;      // sum of token vectors at all positions but the current one
  std::vector<double> dots;      // table . rest
  std::vector<double> scores;    // per-candidate objective
};

Inverter::Inverter(TokenTable table, Pooling pooling, Metric objective)
    : table_(std::move(table)), pooling_(pooling), objective_(objective) {
  if (table_.size() == 0) throw InvalidArgument("inverter: empty token table");
  sq_norms_.resize(table_.size());
  for (TokenId t = 0; t < table_.size(); ++t) sq_norms_[t] = dot(table_.row(t), table_.row(t));
}

double Inverter::score(std::span<const TokenId> tokens, std::span<const double> target) const {
  EmbedderConfig cfg;
  cfg.dim = table_.dim();
  cfg.pooling = pooling_;
  return similarity(embed(tokens, cfg, table_), Embedding({target.begin(), target.end()}), objective_);
}

void Inverter::candidate_scores(std::span<const TokenId> tokens, std::size_t pos, std::span<const double> target,
                                double target_sq_norm, std::span<const double> token_dot_target,
                                Workspace& ws) const {
  const std::size_t v = table_.size(), d = table_.dim();
  if (pooling_ == Pooling::First) {
    if (pos == 0) {
      for (std::size_t t = 0; t < v; ++t) {
        if (objective_ == Metric::Dot) {
          ws.scores[t] = token_dot_target[t];
        } else {
          const double den = sq_norms_[t] * target_sq_norm;
          ws.scores[t] = den == 0.0 ? 0.0 : token_dot_target[t] / std::sqrt(den);
        }
      }
    } else {
      // Only the first token is pooled: every candidate scores the same.
      const double s = score(tokens, target);
      std::fill(ws.scores.begin(), ws.scores.end(), s);
    }
    return;
  }

  std::fill(ws.rest.begin(), ws.rest.end(), 0.0);
  for (std::size_t p = 0; p < tokens.size(); ++p) {
    if (p == pos) continue;
    const auto r = table_.row(tokens[p]);
    for (std::size_t j = 0; j < d; ++j) ws.rest[j] += r[j];
  }
  const double rest_dot_target = dot(ws.rest, target);
  const double len = static_cast<double>(tokens.size());
  if (objective_ == Metric::Dot) {
    for (std::size_t t = 0; t < v; ++t) ws.scores[t] = (rest_dot_target + token_dot_target[t]) / len;
    return;
  }
  // Cosine of the mean equals cosine of the sum.
  kernels::serial::dot_scores(table_.matrix(), ws.rest, ws.dots);
  const double rest_sq = dot(ws.rest, ws.rest);
  for (std::size_t t = 0; t < v; ++t) {
    const double sum_sq = rest_sq + 2.0 * ws.dots[t] + sq_norms_[t];
    const double den = sum_sq * target_sq_norm;
    ws.scores[t] = den <= 0.0 ? 0.0 : (rest_dot_target + token_dot_target[t]) / std::sqrt(den);
  }
}

InversionResult Inverter::invert(std::span<const double> target, const InversionBudget& budget,
                                 std::span<const TokenId> prefix, InversionTrace* trace) const {
  budget.validate();
  if (target.size() != table_.dim())
    throw InvalidArgument("invert: target dim " + std::to_string(target.size()) + " != table dim " +
                          std::to_string(table_.dim()));
  if (prefix.size() > budget.passage_len) throw InvalidArgument("invert: prefix longer than passage_len");
  for (TokenId t : prefix)
    if (t >= table_.size()) throw InvalidArgument("invert: prefix token outside vocabulary");

  const std::size_t v = table_.size();
  std::vector<double> token_dot_target(v);
  kernels::serial::dot_scores(table_.matrix(), target, token_dot_target);
  const double target_sq_norm = dot(target, target);

  // Single token maximizing the objective on its own.
  TokenId best_single = 0;
  {
    double best = 0.0;
    for (TokenId t = 0; t < v; ++t) {
      double s;
      if (objective_ == Metric::Dot) {
        s = token_dot_target[t];
      } else {
        const double den = sq_norms_[t] * target_sq_norm;
        s = den == 0.0 ? 0.0 : token_dot_target[t] / std::sqrt(den);
      }
      if (t == 0 || s > best) {
        best = s;
        best_single = t;
      }
    }
  }

  Workspace ws{std::vector<double>(table_.dim()), std::vector<double>(v), std::vector<double>(v)};
  InversionResult best;
  bool have_best = false;
  if (trace) trace->scores.assign(budget.restarts, {});

  for (std::size_t r = 0; r < budget.restarts; ++r) {
    std::vector<TokenId> tokens(budget.passage_len, best_single);
    std::copy(prefix.begin(), prefix.end(), tokens.begin());
    if (r > 0) {
      Rng rng(derive_seed(budget.seed, r));
      for (std::size_t p = prefix.size(); p < tokens.size(); ++p) tokens[p] = static_cast<TokenId>(rng.uniform_int(v));
    }
    double current = score(tokens, target);
    if (trace) trace->scores[r].push_back(current);

    std::size_t sweeps = 0;
    for (; sweeps < budget.max_sweeps;) {
      ++sweeps;
      bool changed = false;
      for (std::size_t pos = prefix.size(); pos < tokens.size(); ++pos) {
        candidate_scores(tokens, pos, target, target_sq_norm, token_dot_target, ws);
        TokenId pick = 0;
        for (TokenId t = 1; t < v; ++t)
          if (ws.scores[t] > ws.scores[pick]) pick = t;
        // Keep the current token unless something strictly better exists or a
        // lower id ties it exactly.
        if (ws.scores[pick] < ws.scores[tokens[pos]]) pick = tokens[pos];
        if (pick != tokens[pos]) {
          tokens[pos] = pick;
          changed = true;
          current = score(tokens, target);
        }
        if (trace) trace->scores[r].push_back(current);
      }
      if (!changed) break;
    }

    if (!have_best || current > best.score) {
      best = {tokens, current, r, sweeps};
      have_best = true;
    }
  }
  return best;
}

TokenTable attacker_table(const TokenTable& base, const DefensePipeline& pipeline) {
  const auto pub = pipeline.public_part();
  if (pub.empty()) return base;
  Matrix out(base.size(), pub.output_dim());
  for (TokenId t = 0; t < base.size(); ++t) {
    const auto r = base.row(t);
    const auto e = pub.apply(Embedding({r.begin(), r.end()}), "", Side::Corpus);
    std::copy(e.values().begin(), e.values().end(), out.row(t).begin());
  }
  return TokenTable(std::move(out));
}

std::string to_string(AttackMode m) {
  return m == AttackMode::CentroidInjection ? "centroid_injection" : "inversion";
}

AttackMode parse_attack_mode(std::string_view s) {
  if (s == "centroid_injection") return AttackMode::CentroidInjection;
  if (s == "inversion") return AttackMode::Inversion;
  throw InvalidArgument("unknown attack mode '" + std::string(s) + "' (expected centroid_injection|inversion)");
}

std::vector<std::string> AttackResult::ids() const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.id);
  return out;
}

AttackResult centroid_injection(const Clustering& clustering, Metric metric) {
  AttackResult res{AttackMode::CentroidInjection, clustering.k, {}};
  res.entries.reserve(clustering.k);
  for (std::size_t c = 0; c < clustering.k; ++c) {
    auto v = clustering.centroid(c);
    const double sim = similarity(v, v, metric);
    res.entries.push_back({c, "adv:centroid:" + std::to_string(c), std::nullopt, std::move(v), sim});
  }
  return res;
}

PoisonedIndex run_attack(AttackMode mode, const Clustering& clustering, const VectorIndex& corpus_index,
                         const InversionInputs& inputs) {
  if (clustering.centroids.cols != corpus_index.dim())
    throw InvalidArgument("run_attack: centroid dim " + std::to_string(clustering.centroids.cols) +
                          " != index dim " + std::to_string(corpus_index.dim()));
  AttackResult result;
  if (mode == AttackMode::CentroidInjection) {
    result = centroid_injection(clustering, corpus_index.metric());
  } else {
    if (!inputs.embedder || !inputs.pipeline) throw InvalidArgument("run_attack: inversion needs an embedder and pipeline");
    const Embedder& emb = *inputs.embedder;
    const DefensePipeline& pipe = *inputs.pipeline;
    const Inverter inverter(attacker_table(emb.table(), pipe), emb.config().pooling, inputs.objective);
    if (inverter.table().dim() != clustering.centroids.cols)
      throw InvalidArgument("run_attack: attacker model dim does not match centroid dim");
    result.mode = mode;
    result.k = clustering.k;
    result.entries.resize(clustering.k);
    const auto k = static_cast<std::ptrdiff_t>(clustering.k);
    std::string error;
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t ci = 0; ci < k; ++ci) {
      const auto c = static_cast<std::size_t>(ci);
      try {
        InversionBudget b = inputs.budget;
        b.seed = derive_seed(inputs.budget.seed, c);
        const auto target = clustering.centroids.row(c);
        const auto inv = inverter.invert(target, b, inputs.prefix);
        Passage p{"adv:passage:" + std::to_string(c), detokenize(inv.tokens, emb.vocab()), inv.tokens};
        auto vec = pipe.apply(emb.embed(p.tokens), p.id, Side::Corpus);
        result.entries[c] = {c, p.id, std::move(p), std::move(vec), inv.score};
      } catch (const std::exception& e) {
#pragma omp critical(plab_attack_error)
        if (error.empty()) error = e.what();
      }
    }
    if (!error.empty()) throw InternalError("inversion failed: " + error);
  }
  std::vector<InjectEntry> inject;
  inject.reserve(result.entries.size());
  for (const auto& e : result.entries) inject.push_back({e.id, e.vector});
  auto poisoned = corpus_index.inject(inject);
  return {std::move(result), std::move(poisoned)};
}

void write_attack_jsonl(const std::filesystem::path& path, const AttackResult& result,
                        const std::string& vectors_file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t i = 0; i < result.entries.size(); ++i) {
    const auto& e = result.entries[i];
    nlohmann::json j{{"cluster", e.cluster}, {"id", e.id}};
    j["text"] = e.passage ? nlohmann::json(e.passage->text) : nlohmann::json(nullptr);
    j["vector_ref"] = e.passage ? nlohmann::json(nullptr) : nlohmann::json(vectors_file + "#" + std::to_string(i));
    j["target_similarity"] = e.target_similarity;
    out << j.dump() << '\n';
  }
}

}  // namespace plab
