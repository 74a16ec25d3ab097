#pragma once

// Adversarial passage synthesis.
//
// The bundled encoders are linear in their token table, so the HotFlip step
// "swap the token at one position for the one that most increases the
// objective" can be evaluated exactly for every vocabulary entry instead of
// through a first-order gradient estimate. Inverter runs that exact
// coordinate ascent; it stands in for both HotFlip and Vec2Text.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "plab/cluster.hpp"
#include "plab/corpus.hpp"
#include "plab/defense.hpp"
#include "plab/embedder.hpp"
#include "plab/index.hpp"

namespace plab {

struct InversionBudget {
  std::size_t passage_len = 16;
  std::size_t max_sweeps = 10;
  std::size_t restarts = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

struct InversionResult {
  std::vector<TokenId> tokens;
  double score = 0.0;       // objective(pool(tokens), target)
  std::size_t restart = 0;  // restart that produced the result
  std::size_t sweeps = 0;   // sweeps run by that restart
};

/// Objective value after every position update, per restart.
struct InversionTrace {
  std::vector<std::vector<double>> scores;
};

class Inverter {
 public:
  /// `table` is the attacker's view of the token vectors (the public model,
  /// possibly projected); `objective` the similarity being maximized.
  Inverter(TokenTable table, Pooling pooling, Metric objective);

  /// Restart 0 fills every free position with the single best token; restart
  /// r >= 1 draws tokens uniformly from Rng(derive_seed(seed, r)). Sweeps run
  /// left to right, each position taking the best token with the others
  /// fixed (ties to the lowest id), until a sweep changes nothing or
  /// max_sweeps is hit. The best restart wins, ties to the earliest.
  /// `prefix` pins the leading positions.
  InversionResult invert(std::span<const double> target, const InversionBudget& budget,
                         std::span<const TokenId> prefix = {}, InversionTrace* trace = nullptr) const;

  /// objective(pool(tokens), target), evaluated directly.
  double score(std::span<const TokenId> tokens, std::span<const double> target) const;

  const TokenTable& table() const noexcept { return table_; }
  Pooling pooling() const noexcept { return pooling_; }
  Metric objective() const noexcept { return objective_; }

 private:
  struct Workspace;
  void candidate_scores(std::span<const TokenId> tokens, std::size_t pos, std::span<const double> target,
                        double target_sq_norm, std::span<const double> token_dot_target, Workspace& ws) const;

  TokenTable table_;
  std::vector<double> sq_norms_;  // per token
  Pooling pooling_;
  Metric objective_;
};

/// Attacker token table: the base table pushed through the public (projection)
/// stages of the pipeline.
TokenTable attacker_table(const TokenTable& base, const DefensePipeline& pipeline);

enum class AttackMode { CentroidInjection, Inversion };
std::string to_string(AttackMode m);
AttackMode parse_attack_mode(std::string_view s);  // "centroid_injection" | "inversion"

struct AttackEntry {
  std::size_t cluster = 0;
  std::string id;                   // "adv:centroid:<c>" or "adv:passage:<c>"
  std::optional<Passage> passage;   // INVERSION only
  Embedding vector;                 // what is injected into the index
  double target_similarity = 0.0;   // objective(embedding, cluster target)
};

struct AttackResult {
  AttackMode mode = AttackMode::CentroidInjection;
  std::size_t k = 0;
  std::vector<AttackEntry> entries;  // ordered by cluster

  std::vector<std::string> ids() const;
};

/// One raw-vector entry per centroid.
AttackResult centroid_injection(const Clustering& clustering, Metric metric);

struct InversionInputs {
  const Embedder* embedder = nullptr;      // base (undefended) model
  const DefensePipeline* pipeline = nullptr;  // defenses the corpus goes through
  Metric objective = Metric::Cosine;
  InversionBudget budget;
  std::vector<TokenId> prefix;
};

struct PoisonedIndex {
  AttackResult result;
  VectorIndex index;
};

/// Builds one entry per cluster and injects them. INVERSION inverts each
/// centroid (clusters run in parallel, each inversion single-threaded) and
/// indexes the generated text through the full corpus pipeline.
PoisonedIndex run_attack(AttackMode mode, const Clustering& clustering, const VectorIndex& corpus_index,
                         const InversionInputs& inputs);

/// JSONL: {"cluster", "id", "text"|null, "vector_ref"|null, "target_similarity"}.
/// vector_ref names the row of `vectors_file` holding the injected vector.
void write_attack_jsonl(const std::filesystem::path& path, const AttackResult& result,
                        const std::string& vectors_file);

}  // namespace plab
