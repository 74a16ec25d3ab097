#include "plab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/students_t.hpp>

#include "plab/error.hpp"
#include "plab/rng.hpp"

namespace plab {

std::size_t best_adversarial_rank(std::span<const double> scores, std::span<const std::string> ids,
                                  const std::unordered_set<std::string>& adversarial) {
  if (adversarial.empty()) return 0;
  // The best-ranked adversarial row under (score desc, id asc)...
  std::size_t best = ids.size();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!adversarial.contains(ids[i])) continue;
    if (best == ids.size() || scores[i] > scores[best] || (scores[i] == scores[best] && ids[i] < ids[best])) best = i;
  }
  if (best == ids.size()) return 0;
  // ...and the number of rows ahead of it.
  std::size_t ahead = 0;
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (scores[i] > scores[best] || (scores[i] == scores[best] && ids[i] < ids[best])) ++ahead;
  return ahead + 1;
}

PoisonReport success_at_n(const VectorIndex& index, const Matrix& queries,
                          const std::unordered_set<std::string>& adversarial, std::span<const std::size_t> ns) {
  if (ns.empty()) throw InvalidArgument("success_at_n: ns must be non-empty");
  std::vector<std::size_t> ranks(queries.rows, 0);
  const auto nq = static_cast<std::ptrdiff_t>(queries.rows);
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t qi = 0; qi < nq; ++qi) {
    const auto q = static_cast<std::size_t>(qi);
    const auto scores = index.scores(queries.row(q));
    ranks[q] = best_adversarial_rank(scores, index.ids(), adversarial);
  }
  PoisonReport rep;
  for (std::size_t n : ns) {
    std::size_t hits = 0;
    for (std::size_t r : ranks)
      if (r != 0 && r <= n) ++hits;
    rep.success_at[n] = queries.rows == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(queries.rows);
  }
  return rep;
}

std::string normalize_answer_text(std::string_view s) {
  std::string out;
  for (const auto& w : split_words(s)) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

RetrievalReport topk_accuracy(const VectorIndex& index, const Matrix& query_embeddings,
                              std::span<const Query> queries,
                              const std::unordered_map<std::string, std::string>& texts,
                              std::span<const std::size_t> ks) {
  if (ks.empty()) throw InvalidArgument("topk_accuracy: ks must be non-empty");
  if (query_embeddings.rows != queries.size())
    throw InvalidArgument("topk_accuracy: " + std::to_string(query_embeddings.rows) + " embeddings for " +
                          std::to_string(queries.size()) + " queries");
  const std::size_t kmax = *std::max_element(ks.begin(), ks.end());
  if (kmax == 0) throw InvalidArgument("topk_accuracy: k must be >= 1");

  std::unordered_map<std::string, std::string> normalized;
  normalized.reserve(texts.size());
  for (const auto& [id, text] : texts) normalized.emplace(id, " " + normalize_answer_text(text) + " ");

  // First rank holding an answer, 0 for a miss, SIZE_MAX for answerless.
  constexpr std::size_t kSkip = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> first_hit(queries.size(), kSkip);
  const auto nq = static_cast<std::ptrdiff_t>(queries.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t qi = 0; qi < nq; ++qi) {
    const auto q = static_cast<std::size_t>(qi);
    std::vector<std::string> answers;
    for (const auto& a : queries[q].answers) {
      auto n = normalize_answer_text(a);
      if (!n.empty()) answers.push_back(std::move(n));
    }
    if (answers.empty()) continue;
    first_hit[q] = 0;
    const auto hits = index.search(query_embeddings.row(q), kmax);
    for (const auto& h : hits) {
      const auto it = normalized.find(h.id);
      if (it == normalized.end()) continue;
      const bool found = std::any_of(answers.begin(), answers.end(),
                                     [&](const std::string& a) { return it->second.find(a) != std::string::npos; });
      if (found) {
        first_hit[q] = h.rank;
        break;
      }
    }
  }

  RetrievalReport rep;
  for (std::size_t r : first_hit)
    if (r != kSkip) ++rep.evaluated;
  if (rep.evaluated == 0) throw DataError("topk_accuracy: no query has a non-empty answer");
  for (std::size_t k : ks) {
    std::size_t hits = 0;
    for (std::size_t r : first_hit)
      if (r != kSkip && r != 0 && r <= k) ++hits;
    rep.accuracy_at[k] = static_cast<double>(hits) / static_cast<double>(rep.evaluated);
  }
  return rep;
}

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, std::size_t> ngram_counts(const std::vector<std::string>& toks, std::size_t n) {
  std::map<Ngram, std::size_t> out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) ++out[Ngram(toks.begin() + i, toks.begin() + i + n)];
  return out;
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  bool pending = false;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      pending = !out.empty();
    } else {
      if (pending) out += ' ';
      pending = false;
      out += c;
    }
  }
  return out;
}

}  // namespace

double bleu(std::string_view candidate, std::string_view reference) {
  const auto c = split_words(candidate);
  const auto r = split_words(reference);
  if (c.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto cn = ngram_counts(c, n);
    const auto rn = ngram_counts(r, n);
    std::size_t matches = 0, total = 0;
    for (const auto& [g, cnt] : cn) {
      total += cnt;
      const auto it = rn.find(g);
      if (it != rn.end()) matches += std::min(cnt, it->second);
    }
    double p;
    if (matches > 0) {
      p = static_cast<double>(matches) / static_cast<double>(total);
    } else if (n == 1) {
      return 0.0;
    } else {
      p = 1.0 / (static_cast<double>(total) + 1.0);
    }
    log_sum += 0.25 * std::log(p);
  }
  const double cl = static_cast<double>(c.size()), rl = static_cast<double>(r.size());
  const double bp = cl < rl ? std::exp(1.0 - rl / cl) : 1.0;
  return 100.0 * bp * std::exp(log_sum);
}

double token_f1(std::string_view candidate, std::string_view reference) {
  const auto c = split_words(candidate);
  const auto r = split_words(reference);
  if (c.empty() && r.empty()) return 1.0;
  if (c.empty() || r.empty()) return 0.0;
  std::unordered_map<std::string, std::ptrdiff_t> bag;
  for (const auto& w : r) ++bag[w];
  std::size_t overlap = 0;
  for (const auto& w : c) {
    auto it = bag.find(w);
    if (it != bag.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  // 2PR/(P+R) with P = o/|c| and R = o/|r| simplifies to 2o/(|c|+|r|).
  return 2.0 * static_cast<double>(overlap) / static_cast<double>(c.size() + r.size());
}

double exact_match(std::string_view candidate, std::string_view reference) {
  return collapse_whitespace(candidate) == collapse_whitespace(reference) ? 1.0 : 0.0;
}

double recon_cos(std::string_view original, std::string_view reconstructed, const Embedder& embedder) {
  const auto a = tokenize(original, embedder.vocab());
  const auto b = tokenize(reconstructed, embedder.vocab());
  if (a.empty() || b.empty()) throw InvalidArgument("recon_cos: text tokenizes to nothing");
  return similarity(embedder.embed(a), embedder.embed(b), Metric::Cosine);
}

Matrix recon_targets(std::span<const Passage> sample, const Embedder& embedder, const DefensePipeline& pipeline) {
  Matrix out(sample.size(), pipeline.output_dim());
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const auto e = pipeline.apply(embedder.embed(sample[i].tokens), sample[i].id, Side::Corpus);
    std::copy(e.values().begin(), e.values().end(), out.row(i).begin());
  }
  return out;
}

ReconReport recon_suite(std::span<const Passage> sample, const Matrix& targets, const Inverter& attacker,
                        const InversionBudget& budget, const Embedder& undefended) {
  if (sample.empty()) throw InvalidArgument("recon_suite: empty sample");
  if (targets.rows != sample.size()) throw InvalidArgument("recon_suite: one target row per passage required");
  ReconReport rep;
  rep.samples.resize(sample.size());
  const auto n = static_cast<std::ptrdiff_t>(sample.size());
  std::string error;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t si = 0; si < n; ++si) {
    const auto i = static_cast<std::size_t>(si);
    try {
      InversionBudget b = budget;
      b.passage_len = sample[i].tokens.size();
      b.seed = derive_seed(budget.seed, i);
      const auto inv = attacker.invert(targets.row(i), b);
      ReconSample s;
      s.id = sample[i].id;
      s.original = sample[i].text;
      s.reconstructed = detokenize(inv.tokens, undefended.vocab());
      s.bleu = bleu(s.reconstructed, s.original);
      s.token_f1 = token_f1(s.reconstructed, s.original);
      s.exact = exact_match(s.reconstructed, s.original);
      s.cos = similarity(undefended.embed(inv.tokens), undefended.embed(sample[i].tokens), Metric::Cosine);
      rep.samples[i] = std::move(s);
    } catch (const std::exception& e) {
#pragma omp critical(plab_recon_error)
      if (error.empty()) error = e.what();
    }
  }
  if (!error.empty()) throw InternalError("reconstruction failed: " + error);
  for (const auto& s : rep.samples) {
    rep.bleu += s.bleu;
    rep.token_f1 += s.token_f1;
    rep.exact += s.exact;
    rep.cos += s.cos;
  }
  const double cnt = static_cast<double>(rep.samples.size());
  rep.bleu /= cnt;
  rep.token_f1 /= cnt;
  rep.exact /= cnt;
  rep.cos /= cnt;
  return rep;
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (count >= n) return idx;
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  return idx;
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("paired_t_test: samples differ in size");
  if (a.size() < 2) throw InvalidArgument("paired_t_test: need at least two pairs");
  const double n = static_cast<double>(a.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
  mean /= n;
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  TTestResult r;
  r.df = a.size() - 1;
  const double se = std::sqrt(ss / (n - 1.0) / n);
  if (se == 0.0) {
    // Constant differences: no spread to test against.
    r.t = mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), mean);
    r.p = mean == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.t = mean / se;
  const boost::math::students_t dist(static_cast<double>(r.df));
  r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t)));
  return r;
}

}  // namespace plab
