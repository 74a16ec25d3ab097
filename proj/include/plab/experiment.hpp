#pragma once

// Config-driven experiment runner: corpus -> embed -> defend -> index ->
// cluster -> attack -> evaluate.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "plab/attack.hpp"
#include "plab/cluster.hpp"
#include "plab/corpus.hpp"
#include "plab/defense.hpp"
#include "plab/embedder.hpp"
#include "plab/eval.hpp"
#include "plab/index.hpp"

namespace plab {

struct CorpusFiles {
  std::string passages;       // as written in the config
  std::string train_queries;
  std::string test_queries;
};

enum class IndexKind { Exact, Pq };

struct IndexConfig {
  IndexKind kind = IndexKind::Exact;
  PqParams pq;
};

struct AttackConfig {
  AttackMode mode = AttackMode::CentroidInjection;
  std::size_t k = 10;
  std::size_t max_iters = 100;  // k-means
  std::uint64_t seed = 0;       // k-means seeding
  Metric objective = Metric::Cosine;
  InversionBudget budget;
  std::vector<std::string> prefix_tokens;
};

struct EvalConfig {
  std::vector<std::size_t> ns = kDefaultSuccessNs;
  std::vector<std::size_t> ks = kDefaultAccuracyKs;
  std::size_t recon_sample = 100;  // 0 disables the reconstruction suite
  std::uint64_t recon_seed = 0;
  Metric recon_objective = Metric::Cosine;
  InversionBudget recon_budget;    // passage_len is ignored: the attacker uses the true length
};

struct ExperimentConfig {
  std::uint64_t seed = 42;
  std::variant<SyntheticSpec, CorpusFiles> corpus;
  EmbedderConfig embedder;
  std::vector<DefenseStage> defense;
  IndexConfig index;
  AttackConfig attack;
  EvalConfig eval;
  /// Relative corpus/table paths resolve against this directory.
  std::filesystem::path base_dir;
};

/// Exhaustive validation; ConfigError carries the offending field path.
/// Missing fields take documented defaults, seeds default to `seed`.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
/// Fully resolved config, every default spelled out.
nlohmann::json to_json(const ExperimentConfig& cfg);

struct CorpusData {
  Vocabulary vocab;
  std::vector<Passage> passages;
  std::vector<Query> train_queries;
  std::vector<Query> test_queries;
};

/// Generates or ingests the corpus. File corpora share one vocabulary built
/// from all three files.
CorpusData load_corpus(const ExperimentConfig& cfg);

/// Everything the defender holds before the attack.
struct World {
  std::vector<Passage> passages;
  std::vector<Query> train_queries;
  std::vector<Query> test_queries;
  Embedder embedder;            // undefended
  DefensePipeline pipeline;
  Matrix corpus;                // defended passage embeddings
  Matrix train;                 // query-side defended embeddings
  Matrix test;
  VectorIndex index;            // clean index over `corpus`

  std::vector<std::string> passage_ids() const;
};

World build_world(const ExperimentConfig& cfg);

/// k-means over the attacker's view of the training queries (normalized first
/// under COSINE).
Clustering cluster_queries(const ExperimentConfig& cfg, const World& world);

PoisonedIndex attack(const ExperimentConfig& cfg, const World& world, const Clustering& clustering);

RetrievalReport retrieval(const ExperimentConfig& cfg, const World& world);

/// Reconstruction attack on a seeded passage sample. Targets are the stored
/// embeddings (PQ reconstructions for a PQ index); the attacker knows the
/// public stages only.
ReconReport reconstruction(const ExperimentConfig& cfg, const World& world);

struct RunResult {
  Clustering clustering;
  AttackResult attack;
  PoisonReport poison;
  RetrievalReport retrieval;
  std::optional<ReconReport> recon;
  std::size_t poisoned_size = 0;
};

RunResult run_experiment(const ExperimentConfig& cfg, const World& world);
RunResult run_experiment(const ExperimentConfig& cfg);

nlohmann::json report_json(const ExperimentConfig& cfg, const World& world, const RunResult& run);
std::string report_markdown(const nlohmann::json& report);

/// report.json, report.md, attack.jsonl, centroids.bin/.ids and the injected
/// vectors as adversarial.bin/.ids.
void write_run_outputs(const std::filesystem::path& out_dir, const ExperimentConfig& cfg, const World& world,
                       const RunResult& run);

/// The config with every noise stage set to `lambda`, or a corpus-side noise
/// stage (seed = cfg.seed) prepended when there is none.
ExperimentConfig with_noise(const ExperimentConfig& cfg, double lambda);

struct SweepRow {
  double lambda = 0.0;
  PoisonReport poison;
  RetrievalReport retrieval;
  std::optional<ReconReport> recon;
};

std::vector<SweepRow> sweep_noise(const ExperimentConfig& cfg, std::span<const double> lambdas);
/// lambda,success@n...,accuracy@k...,bleu,token_f1,exact,cos
std::string sweep_csv(const ExperimentConfig& cfg, std::span<const SweepRow> rows);

/// One row per run directory (ordered by k, then argument order); columns are
/// the union of metrics, missing cells `—`. DataError names a directory
/// without report.json.
std::string merge_reports(std::span<const std::filesystem::path> dirs);

}  // namespace plab
