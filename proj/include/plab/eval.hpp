#pragma once

// Poisoning success, answer accuracy and reconstruction metrics.

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "plab/attack.hpp"
#include "plab/corpus.hpp"
#include "plab/embedder.hpp"
#include "plab/index.hpp"
#include "plab/matrix.hpp"

namespace plab {

inline const std::vector<std::size_t> kDefaultSuccessNs = {10, 20, 100, 1000};
inline const std::vector<std::size_t> kDefaultAccuracyKs = {1, 5, 10, 20, 100};

struct PoisonReport {
  std::map<std::size_t, double> success_at;
  std::size_t k = 0;
  AttackMode mode = AttackMode::CentroidInjection;
};

/// Rank (1-based) of the best-ranked adversarial entry for one query, or 0
/// when the set is empty or none is indexed. O(n).
std::size_t best_adversarial_rank(std::span<const double> scores, std::span<const std::string> ids,
                                  const std::unordered_set<std::string>& adversarial);

/// Fraction of queries (rows of `queries`) with an adversarial id in their
/// top n, for every n.
PoisonReport success_at_n(const VectorIndex& index, const Matrix& queries,
                          const std::unordered_set<std::string>& adversarial, std::span<const std::size_t> ns);

struct RetrievalReport {
  std::map<std::size_t, double> accuracy_at;
  std::size_t evaluated = 0;  // queries with at least one answer
};

/// Lowercase, trim and collapse whitespace runs to one space.
std::string normalize_answer_text(std::string_view s);

/// Hit at k when any of the top-k passages contains any answer after
/// normalization. Queries without answers are skipped; DataError when all are.
/// Ids missing from `texts` (injected vectors) never match.
RetrievalReport topk_accuracy(const VectorIndex& index, const Matrix& query_embeddings,
                              std::span<const Query> queries,
                              const std::unordered_map<std::string, std::string>& texts,
                              std::span<const std::size_t> ks);

/// Sentence BLEU-4 in [0, 100] over lowercase whitespace tokens. For n >= 2 a
/// zero match count is smoothed to 1 / (count + 1).
double bleu(std::string_view candidate, std::string_view reference);
/// Bag-of-tokens F1.
double token_f1(std::string_view candidate, std::string_view reference);
/// 1 when equal after trimming and collapsing whitespace runs, else 0.
double exact_match(std::string_view candidate, std::string_view reference);
/// Cosine of the undefended embeddings of both texts.
double recon_cos(std::string_view original, std::string_view reconstructed, const Embedder& embedder);

struct ReconSample {
  std::string id;
  std::string original;
  std::string reconstructed;
  double bleu = 0.0, token_f1 = 0.0, exact = 0.0, cos = 0.0;
};

struct ReconReport {
  double bleu = 0.0, token_f1 = 0.0, exact = 0.0, cos = 0.0;
  std::vector<ReconSample> samples;  // in input order
};

/// Embeddings the attacker sees for `sample`: embedded and sent through
/// `pipeline` as corpus passages.
Matrix recon_targets(std::span<const Passage> sample, const Embedder& embedder, const DefensePipeline& pipeline);

/// Inverts each target row (passage length known to the attacker, restart
/// seeds derived from budget.seed and the sample index) and averages the four
/// metrics against the original text.
ReconReport recon_suite(std::span<const Passage> sample, const Matrix& targets, const Inverter& attacker,
                        const InversionBudget& budget, const Embedder& undefended);

/// `count` distinct indices below n (partial Fisher-Yates on Rng(seed)), in
/// draw order; 0..n-1 in order when count >= n.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count, std::uint64_t seed);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;  // two-tailed
  std::size_t df = 0;
};

/// Paired t-test on a[i] - b[i]. Needs at least two pairs.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace plab
