#pragma once

// Embedding-space mitigations applied between the embedder and the index.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "plab/embedder.hpp"
#include "plab/matrix.hpp"

namespace plab {

/// e + lambda * eps, eps ~ N(0, I) keyed by (seed, hash64(entity id)).
struct NoiseConfig {
  double lambda = 0.1;
  std::uint64_t seed = 0;
  bool apply_to_queries = false;
};

/// Secret scaling e -> scale * e.
struct TransformConfig {
  double scale = -2.6;
};

/// e -> P e, P a target_dim x source_dim matrix with orthonormal rows.
struct ProjectConfig {
  std::size_t target_dim = 16;
  std::uint64_t seed = 0;
};

using DefenseStage = std::variant<NoiseConfig, TransformConfig, ProjectConfig>;

enum class Side { Corpus, Query };

Embedding add_noise(const Embedding& e, const NoiseConfig& cfg, std::string_view entity_id);
Embedding transform(const Embedding& e, const TransformConfig& cfg);

/// Gaussian entries from Rng(derive_seed(seed, dims)), rows orthonormalized by
/// modified Gram-Schmidt. Pure function of (seed, target_dim, source_dim).
Matrix projection_matrix(const ProjectConfig& cfg, std::size_t source_dim);
Embedding project(const Embedding& e, const ProjectConfig& cfg, std::size_t source_dim);

class DefensePipeline {
 public:
  DefensePipeline() = default;
  /// Validates stage parameters and the dimension chain starting at `source_dim`.
  DefensePipeline(std::vector<DefenseStage> stages, std::size_t source_dim);

  std::size_t source_dim() const noexcept { return source_dim_; }
  std::size_t output_dim() const noexcept { return output_dim_; }
  const std::vector<DefenseStage>& stages() const noexcept { return stages_; }
  bool empty() const noexcept { return stages_.empty(); }

  /// Applies stages in order; on the query side noise stages with
  /// apply_to_queries = false are skipped.
  Embedding apply(const Embedding& e, std::string_view entity_id, Side side = Side::Corpus) const;

  /// Row-parallel application to a matrix; row i belongs to ids[i].
  Matrix apply_rows(const Matrix& rows, std::span<const std::string> ids, Side side = Side::Corpus) const;

  /// The stages an attacker can reproduce by querying the public model: only
  /// projections. Noise is random and the transform is secret.
  DefensePipeline public_part() const;

 private:
  std::vector<DefenseStage> stages_;
  std::vector<std::shared_ptr<const Matrix>> projections_;  // parallel to stages_, null for non-project
  std::size_t source_dim_ = 0;
  std::size_t output_dim_ = 0;
};

nlohmann::json to_json(const DefenseStage& stage);
/// `path` prefixes ConfigError field paths, e.g. "defense[2]".
DefenseStage stage_from_json(const nlohmann::json& j, const std::string& path);

}  // namespace plab
