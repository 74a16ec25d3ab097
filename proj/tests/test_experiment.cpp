#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "plab/error.hpp"
#include "plab/experiment.hpp"

using namespace plab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json tiny_config() {
  return json::parse(R"({
    "seed": 5,
    "corpus": {"synthetic": {"vocab_size": 300, "num_passages": 400, "num_train_queries": 60,
                             "num_test_queries": 30}},
    "embedder": {"dim": 16, "pooling": "mean", "metric": "cosine"},
    "attack": {"mode": "centroid_injection", "k": 4},
    "eval": {"recon_sample": 5, "ns": [1, 10, 100], "ks": [1, 10]}
  })");
}

std::string config_error_path(const json& j) {
  try {
    parse_config(j);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "<accepted>";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST(Config, DefaultsAreEchoed) {
  const auto cfg = parse_config(json::object());
  EXPECT_EQ(cfg.seed, 42u);
  const auto j = to_json(cfg);
  EXPECT_EQ(j["embedder"]["dim"], 64);
  EXPECT_EQ(j["attack"]["mode"], "centroid_injection");
  EXPECT_EQ(j["attack"]["k"], 10);
  EXPECT_EQ(j["index"]["kind"], "exact");
  EXPECT_EQ(j["eval"]["ns"], json({10, 20, 100, 1000}));
  EXPECT_EQ(j["corpus"]["synthetic"]["num_passages"], 10000);
  // Resolved configs parse back to themselves.
  EXPECT_EQ(to_json(parse_config(j)), j);
}

TEST(Config, ErrorsNameTheField) {
  auto j = tiny_config();
  j["index"] = {{"kind", "pq"}, {"m", 5}};
  EXPECT_EQ(config_error_path(j), "index.m");
  j = tiny_config();
  j["embedder"]["colour"] = 1;
  EXPECT_EQ(config_error_path(j), "embedder.colour");
  j = tiny_config();
  j["embedder"]["pooling"] = "max";
  EXPECT_EQ(config_error_path(j), "embedder.pooling");
  j = tiny_config();
  j["attack"]["k"] = 1000;
  EXPECT_EQ(config_error_path(j), "attack.k");
  j = tiny_config();
  j["defense"] = json::array({{{"kind", "transform"}, {"scale", 0}}});
  EXPECT_EQ(config_error_path(j), "defense[0].scale");
  j = tiny_config();
  j["defense"] = json::array({{{"kind", "project"}, {"target_dim", 8}, {"seed", 1}}});
  j["index"] = {{"kind", "pq"}, {"m", 16}};
  EXPECT_EQ(config_error_path(j), "index.m");
  j = tiny_config();
  j["corpus"] = {{"passages", "does-not-exist.jsonl"}, {"train_queries", "x"}, {"test_queries", "y"}};
  EXPECT_EQ(config_error_path(j).rfind("corpus.", 0), 0u);
}

TEST(Experiment, ReportIsDeterministic) {
  const auto cfg = parse_config(tiny_config());
  const auto world = build_world(cfg);
  const auto a = report_json(cfg, world, run_experiment(cfg, world));
  const auto b = report_json(cfg, build_world(cfg), run_experiment(cfg));
  EXPECT_EQ(a.dump(2), b.dump(2));
  EXPECT_EQ(a["index"]["poisoned_size"], 404);
  EXPECT_EQ(a["defense"], "none");
  EXPECT_FALSE(a["recon"].is_null());
  const auto& s = a["poison"]["success_at"];
  EXPECT_LE(s["1"].get<double>(), s["10"].get<double>());
  EXPECT_LE(s["10"].get<double>(), s["100"].get<double>());
}

TEST(Experiment, WritesOutputs) {
  const auto cfg = parse_config(tiny_config());
  const auto world = build_world(cfg);
  const auto run = run_experiment(cfg, world);
  const auto dir = fresh_dir("plab_exp_outputs");
  write_run_outputs(dir, cfg, world, run);
  for (const char* f : {"report.json", "report.md", "attack.jsonl", "centroids.bin", "centroids.ids",
                        "adversarial.bin", "adversarial.ids"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_EQ(read_embedding_dump(dir / "centroids.bin").rows, 4u);
  EXPECT_EQ(read_ids(dir / "adversarial.ids").size(), 4u);
  fs::remove_all(dir);
}

TEST(Sweep, ZeroNoiseEqualsDefenseFree) {
  auto j = tiny_config();
  const auto clean = parse_config(j);
  const auto rows = sweep_noise(clean, std::vector<double>{0.0});
  const auto base = run_experiment(clean);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].poison.success_at, base.poison.success_at);
  EXPECT_EQ(rows[0].retrieval.accuracy_at, base.retrieval.accuracy_at);
  ASSERT_TRUE(rows[0].recon && base.recon);
  EXPECT_EQ(rows[0].recon->cos, base.recon->cos);
  EXPECT_EQ(rows[0].recon->token_f1, base.recon->token_f1);

  const auto csv = sweep_csv(clean, rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "lambda,success@1,success@10,success@100,accuracy@1,accuracy@10,bleu,token_f1,exact,cos");
}

TEST(Sweep, WithNoiseSetsOrPrependsStage) {
  auto j = tiny_config();
  const auto cfg = with_noise(parse_config(j), 0.5);
  ASSERT_EQ(cfg.defense.size(), 1u);
  EXPECT_EQ(std::get<NoiseConfig>(cfg.defense[0]).lambda, 0.5);
  j["defense"] = json::array({{{"kind", "transform"}, {"scale", 2}},
                              {{"kind", "noise"}, {"lambda", 0.1}, {"seed", 3}}});
  const auto cfg2 = with_noise(parse_config(j), 0.7);
  ASSERT_EQ(cfg2.defense.size(), 2u);
  EXPECT_EQ(std::get<NoiseConfig>(cfg2.defense[1]).lambda, 0.7);
  EXPECT_EQ(std::get<NoiseConfig>(cfg2.defense[1]).seed, 3u);
}

TEST(Merge, OrdersByKAndFillsGaps) {
  const auto root = fresh_dir("plab_merge");
  const auto write = [&](const std::string& name, const json& report) {
    fs::create_directories(root / name);
    std::ofstream(root / name / "report.json") << report.dump(2);
  };
  const auto report = [](int k, bool with_recon) {
    json r;
    r["attack"] = {{"k", k}, {"mode", "centroid_injection"}};
    r["index"] = {{"kind", "exact"}};
    r["defense"] = "none";
    r["poison"]["success_at"] = {{"10", 0.25}};
    r["retrieval"]["accuracy_at"] = {{"1", 0.5}};
    r["recon"] = with_recon ? json{{"bleu", 10.0}, {"token_f1", 0.5}, {"exact", 0.0}, {"cos", 0.9}} : json(nullptr);
    return r;
  };
  write("k1000", report(1000, false));
  write("k10", report(10, true));
  write("k100", report(100, true));
  const std::vector<fs::path> dirs{root / "k1000", root / "k10", root / "k100"};
  const auto table = merge_reports(dirs);
  const auto p10 = table.find("k10 "), p100 = table.find("k100 "), p1000 = table.find("k1000 ");
  ASSERT_NE(p10, std::string::npos);
  EXPECT_LT(p10, p100);
  EXPECT_LT(p100, p1000);
  EXPECT_NE(table.find("—"), std::string::npos);

  const std::vector<fs::path> one{root / "k10"};
  const auto single = merge_reports(one);
  EXPECT_EQ(std::count(single.begin(), single.end(), '\n'), 3);  // header, rule, one row

  fs::create_directories(root / "empty");
  const std::vector<fs::path> bad{root / "k10", root / "empty"};
  try {
    merge_reports(bad);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("empty"), std::string::npos);
  }
  fs::remove_all(root);
}
