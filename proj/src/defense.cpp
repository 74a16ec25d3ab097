#include "plab/defense.hpp"

#include <cmath>

#include "plab/error.hpp"
#include "plab/rng.hpp"

namespace plab {

Embedding add_noise(const Embedding& e, const NoiseConfig& cfg, std::string_view entity_id) {
  if (cfg.lambda == 0.0) return e;
  Rng rng(derive_seed(cfg.seed, hash64(entity_id)));
  std::vector<double> out(e.values().begin(), e.values().end());
  for (auto& x : out) x += cfg.lambda * rng.normal();
  return Embedding(std::move(out));
}

Embedding transform(const Embedding& e, const TransformConfig& cfg) {
  std::vector<double> out(e.values().begin(), e.values().end());
  for (auto& x : out) x *= cfg.scale;
  return Embedding(std::move(out));
}

Matrix projection_matrix(const ProjectConfig& cfg, std::size_t source_dim) {
  if (cfg.target_dim == 0 || cfg.target_dim > source_dim)
    throw InvalidArgument("projection target_dim must lie in [1, source_dim]");
  Rng rng(derive_seed(cfg.seed, (static_cast<std::uint64_t>(cfg.target_dim) << 32) | source_dim));
  Matrix p(cfg.target_dim, source_dim);
  for (auto& x : p.data) x = rng.normal();
  // Modified Gram-Schmidt, run twice per row for numerical orthogonality.
  for (std::size_t i = 0; i < p.rows; ++i) {
    auto ri = p.row(i);
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t k = 0; k < i; ++k) {
        const auto rk = p.row(k);
        const double c = dot(ri, rk);
        for (std::size_t j = 0; j < source_dim; ++j) ri[j] -= c * rk[j];
      }
    }
    const double n = norm(ri);
    if (n < 1e-12) throw InternalError("projection rows are linearly dependent");
    for (auto& x : ri) x /= n;
  }
  return p;
}

namespace {

Embedding apply_projection(const Embedding& e, const Matrix& p) {
  if (e.dim() != p.cols)
    throw InvalidArgument("project: embedding dim " + std::to_string(e.dim()) + " != source dim " +
                          std::to_string(p.cols));
  std::vector<double> out(p.rows);
  for (std::size_t i = 0; i < p.rows; ++i) out[i] = dot(p.row(i), e.values());
  return Embedding(std::move(out));
}

}  // namespace

Embedding project(const Embedding& e, const ProjectConfig& cfg, std::size_t source_dim) {
  if (e.dim() != source_dim)
    throw InvalidArgument("project: embedding dim " + std::to_string(e.dim()) + " != source dim " +
                          std::to_string(source_dim));
  return apply_projection(e, projection_matrix(cfg, source_dim));
}

DefensePipeline::DefensePipeline(std::vector<DefenseStage> stages, std::size_t source_dim)
    : stages_(std::move(stages)), source_dim_(source_dim) {
  if (source_dim == 0) throw InvalidArgument("pipeline source dim must be > 0");
  std::size_t dim = source_dim;
  projections_.resize(stages_.size());
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const std::string where = "defense[" + std::to_string(i) + "]";
    if (const auto* n = std::get_if<NoiseConfig>(&stages_[i])) {
      if (!(n->lambda >= 0.0) || !std::isfinite(n->lambda))
        throw ConfigError(where + ".lambda", "must be a finite value >= 0");
    } else if (const auto* t = std::get_if<TransformConfig>(&stages_[i])) {
      if (t->scale == 0.0 || !std::isfinite(t->scale)) throw ConfigError(where + ".scale", "must be finite and non-zero");
    } else {
      const auto& p = std::get<ProjectConfig>(stages_[i]);
      if (p.target_dim == 0 || p.target_dim > dim)
        throw ConfigError(where + ".target_dim", "must lie in [1, " + std::to_string(dim) + "]");
      projections_[i] = std::make_shared<const Matrix>(projection_matrix(p, dim));
      dim = p.target_dim;
    }
  }
  output_dim_ = dim;
}

Embedding DefensePipeline::apply(const Embedding& e, std::string_view entity_id, Side side) const {
  if (e.dim() != source_dim_ && !stages_.empty())
    throw InvalidArgument("pipeline: embedding dim " + std::to_string(e.dim()) + " != source dim " +
                          std::to_string(source_dim_));
  Embedding cur = e;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    if (const auto* n = std::get_if<NoiseConfig>(&stages_[i])) {
      if (side == Side::Query && !n->apply_to_queries) continue;
      cur = add_noise(cur, *n, entity_id);
    } else if (const auto* t = std::get_if<TransformConfig>(&stages_[i])) {
      cur = transform(cur, *t);
    } else {
      cur = apply_projection(cur, *projections_[i]);
    }
  }
  return cur;
}

Matrix DefensePipeline::apply_rows(const Matrix& rows, std::span<const std::string> ids, Side side) const {
  if (ids.size() != rows.rows) throw InvalidArgument("apply_rows: ids/rows length mismatch");
  if (stages_.empty()) return rows;
  Matrix out(rows.rows, output_dim_);
  const auto n = static_cast<std::ptrdiff_t>(rows.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto e = apply(row_embedding(rows, static_cast<std::size_t>(i)), ids[static_cast<std::size_t>(i)], side);
    std::copy(e.values().begin(), e.values().end(), out.row(static_cast<std::size_t>(i)).begin());
  }
  return out;
}

DefensePipeline DefensePipeline::public_part() const {
  std::vector<DefenseStage> kept;
  for (const auto& s : stages_)
    if (std::holds_alternative<ProjectConfig>(s)) kept.push_back(s);
  return DefensePipeline(std::move(kept), source_dim_);
}

nlohmann::json to_json(const DefenseStage& stage) {
  if (const auto* n = std::get_if<NoiseConfig>(&stage))
    return {{"kind", "noise"}, {"lambda", n->lambda}, {"seed", n->seed}, {"apply_to_queries", n->apply_to_queries}};
  if (const auto* t = std::get_if<TransformConfig>(&stage)) return {{"kind", "transform"}, {"scale", t->scale}};
  const auto& p = std::get<ProjectConfig>(stage);
  return {{"kind", "project"}, {"target_dim", p.target_dim}, {"seed", p.seed}};
}

namespace {

void reject_unknown(const nlohmann::json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(path + "." + key, "unknown field");
  }
}

double get_number(const nlohmann::json& j, const std::string& path, const char* key) {
  if (!j.contains(key)) throw ConfigError(path + "." + key, "required field missing");
  if (!j[key].is_number()) throw ConfigError(path + "." + key, "must be a number");
  return j[key].get<double>();
}

// JSON built in code stores small non-negative ints as signed.
bool non_negative_int(const nlohmann::json& x) {
  return x.is_number_unsigned() || (x.is_number_integer() && x.get<std::int64_t>() >= 0);
}

std::uint64_t get_uint(const nlohmann::json& j, const std::string& path, const char* key) {
  if (!j.contains(key)) throw ConfigError(path + "." + key, "required field missing");
  if (!non_negative_int(j[key])) throw ConfigError(path + "." + key, "must be a non-negative integer");
  return j[key].get<std::uint64_t>();
}

}  // namespace

DefenseStage stage_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "stage must be an object");
  if (!j.contains("kind") || !j["kind"].is_string()) throw ConfigError(path + ".kind", "required string field");
  const auto kind = j["kind"].get<std::string>();
  if (kind == "noise") {
    reject_unknown(j, path, {"kind", "lambda", "seed", "apply_to_queries"});
    NoiseConfig n;
    n.lambda = get_number(j, path, "lambda");
    n.seed = get_uint(j, path, "seed");
    if (j.contains("apply_to_queries")) {
      if (!j["apply_to_queries"].is_boolean()) throw ConfigError(path + ".apply_to_queries", "must be a boolean");
      n.apply_to_queries = j["apply_to_queries"].get<bool>();
    }
    if (!(n.lambda >= 0.0)) throw ConfigError(path + ".lambda", "must be >= 0");
    return n;
  }
  if (kind == "transform") {
    reject_unknown(j, path, {"kind", "scale"});
    TransformConfig t;
    t.scale = get_number(j, path, "scale");
    if (t.scale == 0.0) throw ConfigError(path + ".scale", "must be non-zero");
    return t;
  }
  if (kind == "project") {
    reject_unknown(j, path, {"kind", "target_dim", "seed"});
    ProjectConfig p;
    p.target_dim = get_uint(j, path, "target_dim");
    p.seed = get_uint(j, path, "seed");
    if (p.target_dim == 0) throw ConfigError(path + ".target_dim", "must be > 0");
    return p;
  }
  throw ConfigError(path + ".kind", "unknown stage kind '" + kind + "' (expected noise|transform|project)");
}

}  // namespace plab
