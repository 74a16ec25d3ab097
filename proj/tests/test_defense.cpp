#include <gtest/gtest.h>

#include <cmath>

#include "plab/defense.hpp"
#include "plab/error.hpp"
#include "plab/index.hpp"
#include "test_util.hpp"

using namespace plab;

TEST(Noise, LambdaZeroIsBitIdentity) {
  Rng rng(1);
  const auto e = test::random_embedding(32, rng);
  EXPECT_EQ(add_noise(e, NoiseConfig{0.0, 7, false}, "p1"), e);
}

TEST(Noise, DefaultLambda) { EXPECT_EQ(NoiseConfig{}.lambda, 0.1); }

TEST(Noise, Moments) {
  const Embedding zero(std::vector<double>(10000, 0.0));
  const auto n = add_noise(zero, NoiseConfig{1.0, 3, false}, "entity");
  double s = 0, ss = 0;
  for (double x : n.values()) s += x;
  const double mean = s / 10000.0;
  for (double x : n.values()) ss += (x - mean) * (x - mean);
  const double var = ss / 9999.0;
  EXPECT_GE(mean, -0.05);
  EXPECT_LE(mean, 0.05);
  EXPECT_GE(var, 0.9);
  EXPECT_LE(var, 1.1);
}

TEST(Noise, KeyedByEntityAndSeed) {
  const Embedding e(std::vector<double>(16, 1.0));
  const NoiseConfig cfg{0.5, 9, false};
  EXPECT_EQ(add_noise(e, cfg, "a"), add_noise(e, cfg, "a"));
  EXPECT_NE(add_noise(e, cfg, "a"), add_noise(e, cfg, "b"));
  EXPECT_NE(add_noise(e, cfg, "a"), add_noise(e, NoiseConfig{0.5, 10, false}, "a"));
}

TEST(Transform, Examples) {
  const Embedding e({1.0, -2.0});
  EXPECT_EQ(transform(e, {1.0}), e);
  const auto t = transform(e, {-2.6});
  EXPECT_DOUBLE_EQ(t[0], -2.6);
  EXPECT_DOUBLE_EQ(t[1], 5.2);
  EXPECT_EQ(transform(transform(e, {2.0}), {0.5}), e);
  EXPECT_EQ(TransformConfig{}.scale, -2.6);
}

TEST(Project, SquareIsIsometry) {
  Rng rng(2);
  const ProjectConfig cfg{16, 5};
  for (int i = 0; i < 100; ++i) {
    const auto e = test::random_embedding(16, rng);
    EXPECT_NEAR(norm(project(e, cfg, 16).values()), norm(e.values()), 1e-6);
  }
}

TEST(Project, SquarePreservesPairwiseDots) {
  const auto rows = test::random_matrix(50, 24, 3);
  const ProjectConfig cfg{24, 1};
  for (std::size_t i = 0; i < rows.rows; ++i)
    for (std::size_t j = i + 1; j < rows.rows; ++j) {
      const double d = dot(rows.row(i), rows.row(j));
      const double p = dot(project(row_embedding(rows, i), cfg, 24).values(),
                           project(row_embedding(rows, j), cfg, 24).values());
      EXPECT_LE(std::fabs(p - d), 1e-5 * std::max(1.0, std::fabs(d)));
    }
}

TEST(Project, RowsOrthonormal) {
  const auto p = projection_matrix({16, 4}, 64);
  ASSERT_EQ(p.rows, 16u);
  ASSERT_EQ(p.cols, 64u);
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 16; ++j) EXPECT_NEAR(dot(p.row(i), p.row(j)), i == j ? 1.0 : 0.0, 1e-12);
}

TEST(Project, Deterministic) {
  Rng rng(3);
  const auto e = test::random_embedding(64, rng);
  EXPECT_EQ(project(e, {16, 9}, 64), project(e, {16, 9}, 64));
  EXPECT_NE(project(e, {16, 9}, 64), project(e, {16, 10}, 64));
  EXPECT_THROW(project(Embedding({1.0, 2.0}), {1, 0}, 64), InvalidArgument);
}

TEST(Project, BeatsTruncationOnPairwiseDots) {
  // Anisotropic unit vectors: the variance of coordinate j grows with j, so
  // which 16 coordinates a fixed truncation keeps matters. (For isotropic
  // data, truncation and a random orthonormal map are equivalent in law.)
  const std::size_t n = 1000, d = 64, t = 16;
  Matrix x(n, d);
  Rng rng(17);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = x.row(i);
    for (std::size_t j = 0; j < d; ++j) r[j] = rng.normal() * (0.2 + static_cast<double>(j) / d);
    const double nr = norm(r);
    for (auto& v : r) v /= nr;
  }
  const ProjectConfig cfg{t, 1};
  const auto p = projection_matrix(cfg, d);
  Matrix proj(n, t), trunc(n, t);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < t; ++k) {
      proj.row(i)[k] = dot(p.row(k), x.row(i));
      trunc.row(i)[k] = x.row(i)[k];
    }
  }
  double e_proj = 0, e_trunc = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double ref = dot(x.row(i), x.row(j));
      e_proj += std::pow(dot(proj.row(i), proj.row(j)) - ref, 2);
      e_trunc += std::pow(dot(trunc.row(i), trunc.row(j)) - ref, 2);
    }
  EXPECT_LT(e_proj, e_trunc);
}

TEST(Pipeline, EmptyIsIdentity) {
  Rng rng(4);
  const auto e = test::random_embedding(8, rng);
  const DefensePipeline p({}, 8);
  EXPECT_EQ(p.apply(e, "x"), e);
  EXPECT_EQ(p.apply(e, "x", Side::Query), e);
}

TEST(Pipeline, NoiseTransformCommute) {
  Rng rng(5);
  const auto e = test::random_embedding(32, rng);
  const DefensePipeline a({NoiseConfig{0.1, 7, false}, TransformConfig{2.0}}, 32);
  const DefensePipeline b({TransformConfig{2.0}, NoiseConfig{0.2, 7, false}}, 32);
  EXPECT_EQ(a.apply(e, "p9"), b.apply(e, "p9"));
}

TEST(Pipeline, QuerySideSkipsNoiseUnlessRequested) {
  Rng rng(6);
  const auto e = test::random_embedding(8, rng);
  const DefensePipeline corpus_only({NoiseConfig{0.3, 1, false}, TransformConfig{3.0}}, 8);
  EXPECT_EQ(corpus_only.apply(e, "q", Side::Query), transform(e, {3.0}));
  EXPECT_NE(corpus_only.apply(e, "q", Side::Corpus), transform(e, {3.0}));
  const DefensePipeline both({NoiseConfig{0.3, 1, true}}, 8);
  EXPECT_EQ(both.apply(e, "q", Side::Query), both.apply(e, "q", Side::Corpus));
}

TEST(Pipeline, ValidatesStagesWithFieldPaths) {
  try {
    DefensePipeline({TransformConfig{2.0}, ProjectConfig{10, 0}, ProjectConfig{12, 0}}, 16);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.path(), "defense[2].target_dim");
  }
  EXPECT_THROW(DefensePipeline({NoiseConfig{-1.0, 0, false}}, 4), ConfigError);
  EXPECT_THROW(DefensePipeline({TransformConfig{0.0}}, 4), ConfigError);
  EXPECT_EQ(DefensePipeline({ProjectConfig{5, 0}}, 9).output_dim(), 5u);
}

TEST(Pipeline, ApplyRowsMatchesApply) {
  const auto rows = test::random_matrix(40, 12, 8);
  const auto ids = test::numbered_ids(40);
  const DefensePipeline p({NoiseConfig{0.2, 3, false}, ProjectConfig{6, 2}, TransformConfig{-1.5}}, 12);
  const auto out = p.apply_rows(rows, ids);
  for (std::size_t i = 0; i < rows.rows; ++i) {
    const auto e = p.apply(row_embedding(rows, i), ids[i]);
    EXPECT_EQ(row_embedding(out, i), e);
  }
}

TEST(Pipeline, PublicPartKeepsProjections) {
  const DefensePipeline p({NoiseConfig{0.2, 3, false}, ProjectConfig{6, 2}, TransformConfig{-1.5}}, 12);
  const auto pub = p.public_part();
  ASSERT_EQ(pub.stages().size(), 1u);
  EXPECT_TRUE(std::holds_alternative<ProjectConfig>(pub.stages()[0]));
  EXPECT_EQ(pub.output_dim(), 6u);
}

TEST(Pipeline, TransformKeepsRankings) {
  const auto corpus = test::random_matrix(300, 16, 9);
  const auto queries = test::random_matrix(30, 16, 10);
  const auto ids = test::numbered_ids(300);
  const DefensePipeline t({TransformConfig{-2.6}}, 16);
  const auto tcorpus = t.apply_rows(corpus, ids);
  const auto tqueries = t.apply_rows(queries, test::numbered_ids(30, "q"), Side::Query);
  for (Metric m : {Metric::Dot, Metric::Cosine}) {
    const auto a = ExactIndex::build(corpus, ids, m);
    const auto b = ExactIndex::build(tcorpus, ids, m);
    for (std::size_t q = 0; q < queries.rows; ++q) {
      const auto ha = a.search(queries.row(q), 100), hb = b.search(tqueries.row(q), 100);
      ASSERT_EQ(ha.size(), hb.size());
      for (std::size_t i = 0; i < ha.size(); ++i) EXPECT_EQ(ha[i].id, hb[i].id);
    }
  }
}

TEST(StageJson, RoundTripAndErrors) {
  for (const DefenseStage& s : {DefenseStage{NoiseConfig{0.1, 7, true}}, DefenseStage{TransformConfig{-2.6}},
                                DefenseStage{ProjectConfig{16, 9}}}) {
    const auto j = to_json(s);
    EXPECT_EQ(to_json(stage_from_json(j, "defense[0]")), j);
  }
  const auto expect_path = [](const nlohmann::json& j, const std::string& path) {
    try {
      stage_from_json(j, "defense[1]");
      ADD_FAILURE() << "accepted " << j.dump();
    } catch (const ConfigError& e) {
      EXPECT_EQ(e.path(), path);
    }
  };
  expect_path({{"kind", "noise"}, {"lambda", -1}, {"seed", 1}}, "defense[1].lambda");
  expect_path({{"kind", "transform"}, {"scale", 0}}, "defense[1].scale");
  expect_path({{"kind", "project"}, {"target_dim", 4}, {"seed", 1}, {"extra", 1}}, "defense[1].extra");
  expect_path({{"kind", "rotate"}}, "defense[1].kind");
}
